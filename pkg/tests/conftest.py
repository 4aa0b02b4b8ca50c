"""Shared fixtures: stub scorers and a desk-scale trained encoder."""

import hashlib
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import pytest

from latentmate.board import Color, Position, material_balance, mirror, random_playout
from latentmate.dataset import AnnotatedPosition, Dataset
from latentmate.encoder import PositionEncoder
from latentmate.models import EncoderConfig, TrainConfig
from latentmate.planner import AdvantageAxis, EncoderScorer, compute_axis
from latentmate.trainer import train


class MaterialScorer:
    """2-D embedding [m, 1] / |[m, 1]| with m the material balance.

    Against the axis a = (1, 0) the score is m / sqrt(m^2 + 1), which is
    strictly increasing in White's material.
    """

    def __init__(self) -> None:
        self.calls = 0

    def embed(self, positions: Sequence[Position]) -> np.ndarray:
        self.calls += 1
        rows = np.array([[material_balance(p), 1.0] for p in positions], dtype=np.float64)
        if not len(rows):
            return np.zeros((0, 2))
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)


class FenHashScorer:
    """Deterministic pseudo-random unit vectors keyed by FEN."""

    def __init__(self, dim: int = 8) -> None:
        self.dim = dim

    def embed(self, positions: Sequence[Position]) -> np.ndarray:
        rows = []
        for pos in positions:
            seed = int.from_bytes(hashlib.sha256(pos.fen.encode()).digest()[:8], "little")
            v = np.random.default_rng(seed).standard_normal(self.dim)
            rows.append(v / np.linalg.norm(v))
        return np.array(rows).reshape(len(rows), self.dim)


class MirroredHashScorer:
    """Hash embedding that changes sign under colour mirroring.

    embed(mirror(P)) == -embed(P), so a White engine in P and a Black engine
    in mirror(P) see the same scores. Vectors are pseudo-random, so cosine
    ties do not occur.
    """

    def __init__(self, dim: int = 8) -> None:
        self.hashes = FenHashScorer(dim)

    def embed(self, positions: Sequence[Position]) -> np.ndarray:
        rows = []
        for pos in positions:
            flipped = mirror(pos)
            if pos.fen < flipped.fen:
                rows.append(self.hashes.embed([pos])[0])
            else:
                rows.append(-self.hashes.embed([flipped])[0])
        return np.array(rows).reshape(len(rows), self.hashes.dim)


class TableScorer:
    """Looks embeddings up by FEN; unknown positions map to ``default``."""

    def __init__(self, table: Mapping[str, Sequence[float]], default: Sequence[float]) -> None:
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.default = np.asarray(default, dtype=np.float64)

    def embed(self, positions: Sequence[Position]) -> np.ndarray:
        rows = [self.table.get(p.fen, self.default) for p in positions]
        return np.array(rows).reshape(len(rows), len(self.default))


@pytest.fixture
def material_scorer() -> MaterialScorer:
    return MaterialScorer()


@pytest.fixture
def material_axis() -> AdvantageAxis:
    """a = (1, 0): cosine with a MaterialScorer row tracks White's material."""
    return AdvantageAxis.from_means(np.array([1.0, 0.0]), np.array([0.0, 0.0]))


@pytest.fixture
def hash_scorer() -> FenHashScorer:
    return FenHashScorer(dim=8)


@pytest.fixture
def hash_axis() -> AdvantageAxis:
    rng = np.random.default_rng(7)
    return AdvantageAxis.from_means(rng.standard_normal(8), rng.standard_normal(8))


@pytest.fixture
def micro_config() -> EncoderConfig:
    """Smallest useful encoder shape, fast enough for unit tests."""
    return EncoderConfig(
        num_layers=1, hidden_dim=16, embed_dim=8, num_heads=2, mlp_size=32, dropout_rate=0.0
    )


@dataclass(frozen=True)
class DeskRun:
    """A Tiny encoder trained once per session for the slow strength checks."""

    model: PositionEncoder
    losses: list[float]
    train_set: Dataset
    held_out: Dataset
    axis: AdvantageAxis


def material_label(pos: Position) -> float:
    """White win probability from material; six pawns or more is decisive."""
    m = material_balance(pos)
    if m >= 6:
        return 1.0
    if m <= -6:
        return 0.0
    return float(1.0 / (1.0 + np.exp(-m / 2.0)))


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory: pytest.TempPathFactory) -> DeskRun:
    rng = np.random.default_rng(0)
    items = [
        AnnotatedPosition(pos, material_label(pos))
        for _ in range(250)
        for pos in random_playout(rng, max_plies=120)
    ]
    train_set, held_out = Dataset.from_annotated(items).split(0.1, seed=0)
    result = train(
        train_set,
        EncoderConfig.preset("tiny"),
        TrainConfig(steps=2000, batch_size=128, seed=0),
        tmp_path_factory.mktemp("desk"),
    )
    axis = compute_axis(
        EncoderScorer(result.model),
        train_set.decisive(Color.WHITE),
        train_set.decisive(Color.BLACK),
    )
    return DeskRun(result.model, result.losses, train_set, held_out, axis)
