"""Advantage axis and embedding-guided beam search.

Scores are White-perspective cosines with the advantage axis
a = mu_white - mu_black. The engine maximises ``sign * score`` where sign is
+1 when it plays White and -1 when it plays Black.

Two selection rules:

* literal: every ply keeps the k children best for the engine, and the
  root move of the best-scoring node at the final level is played.
* adversarial (default): engine plies keep the k best children across the
  whole level; opponent plies keep, for each parent, the k children worst for
  the engine. The root move is chosen by minimax backup over the kept tree.

Terminal children are scored by the rules, not the encoder: a checkmate by
White is +1, by Black -1, any draw 0. A mate for the engine outranks every
cosine, and earlier mates outrank later ones.
"""

import hashlib
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .board import (
    ONGOING,
    Color,
    GameStatus,
    Move,
    Position,
    StatusKind,
    apply_move,
    legal_moves,
    status,
)
from .encoder import PositionEncoder, forward_batch
from .errors import LatentMateError
from .logging import log_extra, timed
from .models import PlanConfig
from .tokenizer import tokenize_batch

AXIS_FORMAT_VERSION = 1
DEGENERATE_AXIS_NORM = 1e-8
_MATE_VALUE = 2.0
_MATE_DEPTH_STEP = 1e-3


class AxisError(LatentMateError, ValueError):
    """The advantage axis cannot be built or loaded."""


class PlanningError(LatentMateError):
    """No move can be selected (the root has no legal moves)."""


class Scorer(Protocol):
    """Anything that maps positions to embedding rows."""

    def embed(self, positions: Sequence[Position]) -> np.ndarray:
        """(n, D) array, one row per position."""
        ...


class EncoderScorer:
    """Adapts a trained ``PositionEncoder`` to the ``Scorer`` protocol."""

    def __init__(self, model: PositionEncoder, batch_size: int = 512) -> None:
        self.model = model
        self.batch_size = batch_size

    def embed(self, positions: Sequence[Position]) -> np.ndarray:
        if not positions:
            return np.zeros((0, self.model.config.embed_dim), dtype=np.float32)
        tokens = tokenize_batch(positions)
        chunks = [
            forward_batch(self.model, tokens[i : i + self.batch_size], "eval").cpu().numpy()
            for i in range(0, len(tokens), self.batch_size)
        ]
        return np.concatenate(chunks)


@dataclass(frozen=True)
class AdvantageAxis:
    """mu_white, mu_black and a = mu_white - mu_black."""

    mu_white: np.ndarray
    mu_black: np.ndarray
    a: np.ndarray
    white_count: int
    black_count: int

    def __post_init__(self) -> None:
        if not np.array_equal(self.a, self.mu_white - self.mu_black):
            raise AxisError("axis vector is not mu_white - mu_black")
        if float(np.linalg.norm(self.a)) < DEGENERATE_AXIS_NORM:
            raise AxisError("degenerate axis: mu_white and mu_black coincide")

    @classmethod
    def from_means(
        cls, mu_white: np.ndarray, mu_black: np.ndarray, white_count: int = 1, black_count: int = 1
    ) -> "AdvantageAxis":
        mu_white = np.asarray(mu_white, dtype=np.float64)
        mu_black = np.asarray(mu_black, dtype=np.float64)
        return cls(mu_white, mu_black, mu_white - mu_black, white_count, black_count)

    @property
    def dim(self) -> int:
        return int(self.a.shape[0])

    def _checksum(self) -> str:
        digest = hashlib.sha256()
        for array in (self.mu_white, self.mu_black, self.a):
            digest.update(np.ascontiguousarray(array, dtype=np.float64).tobytes())
        digest.update(f"{self.white_count}:{self.black_count}".encode())
        return digest.hexdigest()

    def save(self, path: Path) -> Path:
        """Write an npz container (D, mu_white, mu_black, a, counts, checksum)."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as f:
            np.savez(
                f,
                format_version=np.int64(AXIS_FORMAT_VERSION),
                dim=np.int64(self.dim),
                mu_white=self.mu_white,
                mu_black=self.mu_black,
                a=self.a,
                counts=np.array([self.white_count, self.black_count], dtype=np.int64),
                checksum=np.array(self._checksum()),
            )
        return path

    @classmethod
    def load(cls, path: Path) -> "AdvantageAxis":
        try:
            with np.load(path, allow_pickle=False) as data:
                version = int(data["format_version"])
                dim = int(data["dim"])
                counts = data["counts"]
                axis = cls(
                    data["mu_white"],
                    data["mu_black"],
                    data["a"],
                    int(counts[0]),
                    int(counts[1]),
                )
                checksum = str(data["checksum"])
        except (OSError, KeyError, ValueError) as e:
            raise AxisError(f"cannot read axis file {path}: {e}") from e
        if version != AXIS_FORMAT_VERSION:
            raise AxisError(f"unsupported axis format version {version}")
        if axis.dim != dim or axis._checksum() != checksum:
            raise AxisError(f"axis file {path} failed its checksum")
        return axis


@timed
def compute_axis(
    scorer: Scorer,
    decisive_whites: Sequence[Position],
    decisive_blacks: Sequence[Position],
) -> AdvantageAxis:
    """Mean embeddings of White-won (p=1) and Black-won (p=0) positions.

    Raises:
        AxisError: an empty set, or coinciding means
    """
    if not decisive_whites or not decisive_blacks:
        raise AxisError(
            f"need positions for both sides, got {len(decisive_whites)} White "
            f"and {len(decisive_blacks)} Black"
        )
    mu_white = np.asarray(scorer.embed(decisive_whites), dtype=np.float64).mean(axis=0)
    mu_black = np.asarray(scorer.embed(decisive_blacks), dtype=np.float64).mean(axis=0)
    axis = AdvantageAxis.from_means(mu_white, mu_black, len(decisive_whites), len(decisive_blacks))
    log_extra(
        "Advantage axis computed",
        whites=axis.white_count,
        blacks=axis.black_count,
        norm=float(np.linalg.norm(axis.a)),
    )
    return axis


def cosine_scores(embeddings: np.ndarray, axis: AdvantageAxis) -> np.ndarray:
    """cos(z, a) for every row of ``embeddings``."""
    z = np.asarray(embeddings, dtype=np.float64)
    dots = (z * axis.a).sum(axis=1)
    norms = np.sqrt((z * z).sum(axis=1)) * float(np.linalg.norm(axis.a))
    return np.clip(dots / np.maximum(norms, 1e-12), -1.0, 1.0)


def score_position(scorer: Scorer, axis: AdvantageAxis, pos: Position) -> float:
    return float(cosine_scores(scorer.embed([pos]), axis)[0])


def score_children(scorer: Scorer, axis: AdvantageAxis, pos: Position) -> list[tuple[Move, float]]:
    """Encoder score of every legal child, embedded in one batch."""
    moves = legal_moves(pos)
    if not moves:
        return []
    children = [apply_move(pos, m) for m in moves]
    scores = cosine_scores(scorer.embed(children), axis)
    return [(m, float(s)) for m, s in zip(moves, scores, strict=True)]


def terminal_score(result: GameStatus) -> float:
    """White-perspective score of a finished game."""
    if result.kind is StatusKind.CHECKMATE:
        return 1.0 if result.winner is Color.WHITE else -1.0
    return 0.0


def node_value(score: float, result: GameStatus, depth: int, engine: Color) -> float:
    """Ranking value for the engine; mates outrank every cosine, sooner ones more."""
    if result.kind is StatusKind.CHECKMATE:
        mate = _MATE_VALUE - depth * _MATE_DEPTH_STEP
        return mate if result.winner is engine else -mate
    return engine.sign * score


@dataclass(eq=False)
class BeamNode:
    """A position reached from the root; ``line[0]`` is the root move."""

    position: Position
    line: tuple[Move, ...]
    score: float
    depth: int
    value: float
    result: GameStatus
    history: tuple[Position, ...]
    parent: "BeamNode | None" = None
    kept_children: list["BeamNode"] = field(default_factory=list)

    @property
    def first_move(self) -> Move:
        return self.line[0]

    @property
    def terminal(self) -> bool:
        return self.result.is_terminal

    def sort_key(self, best_first: bool) -> tuple[float, tuple[str, ...]]:
        return (-self.value if best_first else self.value, tuple(m.uci() for m in self.line))


class BeamSearch:
    """Level-by-level beam search from one root position.

    ``best_by_depth[d]`` holds the move the search would play if it stopped
    after completing level d.
    """

    def __init__(
        self,
        scorer: Scorer,
        axis: AdvantageAxis,
        root: Position,
        config: PlanConfig,
        history: Sequence[Position] = (),
    ) -> None:
        self.scorer = scorer
        self.axis = axis
        self.root = root
        self.config = config
        self.engine = root.side_to_move
        self.root_history = tuple(history) + (root,)
        self.best_by_depth: dict[int, Move] = {}
        self.nodes_scored = 0

    def run(
        self,
        should_stop: Callable[[], bool] | None = None,
        on_level: Callable[[int, Move], None] | None = None,
    ) -> Move:
        """Search level by level; level 1 always completes.

        ``should_stop`` is polled before each deeper level and ``on_level``
        receives (depth, best move) after each completed one.
        """
        moves = legal_moves(self.root)
        if not moves:
            raise PlanningError(f"no legal moves in {self.root.fen}")
        if len(moves) == 1:
            self.best_by_depth[1] = moves[0]
            if on_level is not None:
                on_level(1, moves[0])
            return moves[0]

        # The caller asks for a move, so the root is searched even if drawn by rule.
        root_node = BeamNode(self.root, (), 0.0, 0, 0.0, ONGOING, ())
        frontier = [root_node]
        for depth in range(1, self.config.depth + 1):
            if depth > 1 and should_stop is not None and should_stop():
                break
            frontier = self._advance(frontier, depth)
            self.best_by_depth[depth] = self._decide(root_node, frontier)
            if on_level is not None:
                on_level(depth, self.best_by_depth[depth])
            if self._mate_found(frontier, depth) or not frontier:
                break
        return self.best_by_depth[max(self.best_by_depth)]

    def _expand(self, node: BeamNode) -> list[BeamNode]:
        history = node.history + (node.position,) if node.depth else self.root_history
        children = []
        for move in legal_moves(node.position):
            child = apply_move(node.position, move)
            result = status(child, history)
            children.append(
                BeamNode(
                    position=child,
                    line=node.line + (move,),
                    score=terminal_score(result),
                    depth=node.depth + 1,
                    value=0.0,
                    result=result,
                    history=history,
                    parent=node,
                )
            )
        return children

    def _score(self, children: list[BeamNode]) -> None:
        open_nodes = [c for c in children if not c.terminal]
        if open_nodes:
            scores = cosine_scores(self.scorer.embed([c.position for c in open_nodes]), self.axis)
            for node, s in zip(open_nodes, scores, strict=True):
                node.score = float(s)
            self.nodes_scored += len(open_nodes)
        for c in children:
            c.value = node_value(c.score, c.result, c.depth, self.engine)

    def _advance(self, frontier: list[BeamNode], depth: int) -> list[BeamNode]:
        carried = [n for n in frontier if n.terminal and n.depth > 0]
        groups = [self._expand(n) for n in frontier if not n.terminal]
        self._score([c for group in groups for c in group])

        k = self.config.beam_width
        engine_ply = depth % 2 == 1
        if self.config.paper_literal_mode or engine_ply:
            pool = [c for group in groups for c in group] + carried
            kept = sorted(pool, key=lambda n: n.sort_key(best_first=True))[:k]
        else:
            kept = list(carried)
            for group in groups:
                kept.extend(sorted(group, key=lambda n: n.sort_key(best_first=False))[:k])
        for node in kept:
            if node.depth == depth and node.parent is not None:
                node.parent.kept_children.append(node)
        return kept

    def _decide(self, root: BeamNode, frontier: list[BeamNode]) -> Move:
        if self.config.paper_literal_mode:
            return min(frontier, key=lambda n: n.sort_key(best_first=True)).first_move
        best = min(
            root.kept_children,
            key=lambda n: (-self._backed_up(n), n.first_move.uci()),
        )
        return best.first_move

    def _backed_up(self, node: BeamNode) -> float:
        if not node.kept_children:
            return node.value
        values = [self._backed_up(c) for c in node.kept_children]
        engine_to_move = node.position.side_to_move is self.engine
        return max(values) if engine_to_move else min(values)

    def _mate_found(self, frontier: list[BeamNode], depth: int) -> bool:
        """A mate for the engine on the first level ends the search."""
        return depth == 1 and any(
            n.result.kind is StatusKind.CHECKMATE and n.result.winner is self.engine
            for n in frontier
        )


def select_move(
    scorer: Scorer,
    axis: AdvantageAxis,
    root: Position,
    config: PlanConfig,
    history: Sequence[Position] = (),
    should_stop: Callable[[], bool] | None = None,
) -> Move:
    """Pick the engine's move in ``root`` (the side to move is the engine).

    Raises:
        PlanningError: if ``root`` has no legal moves
    """
    return BeamSearch(scorer, axis, root, config, history).run(should_stop)


def nearest_positions(
    query: np.ndarray,
    reference: np.ndarray,
    k: int = 5,
) -> list[tuple[int, float]]:
    """Rows of ``reference`` closest to ``query`` by cosine, best first."""
    ref = np.asarray(reference, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    sims = (ref @ q) / np.maximum(np.linalg.norm(ref, axis=1) * np.linalg.norm(q), 1e-12)
    order = np.argsort(-sims, kind="stable")[:k]
    return [(int(i), float(sims[i])) for i in order]
