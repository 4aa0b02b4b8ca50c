"""Annotated positions, delta-margin positive index and training batches.

Input format: one record per line, ``FEN<TAB>probability``. Probabilities are
stored on disk either for the side to move (the default) or for White; after
ingest every value is White's win probability.
"""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .board import Color, Position, parse_fen
from .errors import LatentMateError
from .logging import log_extra, timed_block
from .tokenizer import SEQUENCE_LENGTH, tokenize

Perspective = Literal["mover", "white"]


class DatasetError(LatentMateError):
    """Unreadable input or a dataset that cannot serve the requested batches."""


@dataclass(frozen=True)
class AnnotatedPosition:
    """A position with White's win probability."""

    position: Position
    p_white: float


@dataclass(frozen=True)
class IngestReport:
    """Row accounting for one ingest run."""

    rows: int
    kept: int
    skipped: int


class Dataset:
    """Read-only table of positions, their tokens and White win probabilities."""

    def __init__(self, fens: Sequence[str], tokens: np.ndarray, p_white: np.ndarray) -> None:
        if not len(fens) == len(tokens) == len(p_white):
            raise DatasetError("fens, tokens and probabilities differ in length")
        self.fens: tuple[str, ...] = tuple(fens)
        self.tokens = tokens
        self.p_white = p_white
        self.tokens.setflags(write=False)
        self.p_white.setflags(write=False)

    @classmethod
    def from_annotated(cls, items: Iterable[AnnotatedPosition]) -> "Dataset":
        items = list(items)
        tokens = np.empty((len(items), SEQUENCE_LENGTH), dtype=np.int64)
        for i, item in enumerate(items):
            tokens[i] = tokenize(item.position)
        return cls(
            [item.position.fen for item in items],
            tokens,
            np.array([item.p_white for item in items], dtype=np.float64),
        )

    def __len__(self) -> int:
        return len(self.fens)

    def __getitem__(self, i: int) -> AnnotatedPosition:
        return AnnotatedPosition(parse_fen(self.fens[i]), float(self.p_white[i]))

    def subset(self, ids: Sequence[int] | np.ndarray) -> "Dataset":
        ids = np.asarray(ids, dtype=np.int64)
        fens = [self.fens[i] for i in ids]
        return Dataset(fens, self.tokens[ids].copy(), self.p_white[ids].copy())

    def split(self, holdout_fraction: float, seed: int) -> tuple["Dataset", "Dataset"]:
        """(train, held-out) split with a seeded permutation."""
        if not 0 < holdout_fraction < 1:
            raise ValueError("holdout_fraction must be in (0, 1)")
        order = np.random.default_rng(seed).permutation(len(self))
        cut = len(self) - max(1, int(round(len(self) * holdout_fraction)))
        return self.subset(np.sort(order[:cut])), self.subset(np.sort(order[cut:]))

    def decisive(self, winner: Color) -> list[Position]:
        """Positions annotated exactly 1.0 (White wins) or 0.0 (Black wins)."""
        target = 1.0 if winner is Color.WHITE else 0.0
        return [parse_fen(self.fens[i]) for i in np.flatnonzero(self.p_white == target)]


def ingest(
    source: Path,
    perspective: Perspective = "mover",
    seed: int | None = None,
) -> tuple[Dataset, IngestReport]:
    """Load a ``FEN<TAB>probability`` file.

    Invalid rows (wrong field count, bad FEN, probability outside [0, 1]) are
    skipped and counted. With a ``seed`` the rows are shuffled reproducibly.

    Raises:
        DatasetError: if the file cannot be read
    """
    try:
        lines = source.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DatasetError(f"cannot read {source}: {e}") from e

    items: list[AnnotatedPosition] = []
    rows = skipped = 0
    with timed_block("ingest", source=str(source)) as ctx:
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            rows += 1
            item = _parse_row(line, perspective)
            if item is None:
                skipped += 1
                log_extra("Skipping row", logging.DEBUG, line=lineno)
                continue
            items.append(item)
        if seed is not None:
            order = np.random.default_rng(seed).permutation(len(items))
            items = [items[i] for i in order]
        ctx.update(rows=rows, kept=len(items), skipped=skipped)
    if skipped:
        log_extra("Rows skipped during ingest", logging.WARNING, skipped=skipped, rows=rows)
    return Dataset.from_annotated(items), IngestReport(rows=rows, kept=len(items), skipped=skipped)


def _parse_row(line: str, perspective: Perspective) -> AnnotatedPosition | None:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 2:
        return None
    try:
        position = parse_fen(parts[0].strip())
        p = float(parts[1])
    except (LatentMateError, ValueError):
        return None
    if not 0.0 <= p <= 1.0:
        return None
    if perspective == "mover" and position.side_to_move is Color.BLACK:
        p = 1.0 - p
    return AnnotatedPosition(position, p)


def write_annotated(path: Path, items: Iterable[AnnotatedPosition]) -> None:
    """Write White-perspective rows (ingest them back with ``perspective="white"``)."""
    with path.open("w", encoding="utf-8") as f:
        for item in items:
            f.write(f"{item.position.fen}\t{item.p_white!r}\n")


class PositiveIndex:
    """For each position, the ids whose probability differs by less than delta.

    Built by sorting on probability: every neighbour set is a contiguous window
    ``order[lo[i]:hi[i]]`` of the sorted order (the anchor itself excluded).
    """

    def __init__(self, p_white: np.ndarray, delta: float) -> None:
        self.delta = delta
        self.order = np.argsort(p_white, kind="stable")
        self.sorted_p = p_white[self.order]
        self.rank = np.empty_like(self.order)
        self.rank[self.order] = np.arange(len(self.order))
        n = len(p_white)
        if delta <= 0 or n == 0:
            self.lo = np.arange(n)
            self.hi = np.arange(n)
            self.counts = np.zeros(n, dtype=np.int64)
            return

        sp, p = self.sorted_p, p_white
        slack = 1e-12 + 1e-9 * delta
        lo = np.searchsorted(sp, p - delta - slack, side="left")
        hi = np.searchsorted(sp, p + delta + slack, side="right")
        # Trim the widened windows to the exact strict-inequality boundary.
        while True:
            bad = (lo < hi) & ~(np.abs(sp[np.minimum(lo, n - 1)] - p) < delta)
            if not bad.any():
                break
            lo[bad] += 1
        while True:
            bad = (hi > lo) & ~(np.abs(sp[np.maximum(hi - 1, 0)] - p) < delta)
            if not bad.any():
                break
            hi[bad] -= 1
        self.lo = lo
        self.hi = hi
        self.counts = np.maximum(hi - lo - 1, 0)

    def __len__(self) -> int:
        return len(self.order)

    def neighbors(self, i: int) -> np.ndarray:
        """Ids positive for ``i`` (never ``i`` itself), ascending."""
        window = self.order[self.lo[i] : self.hi[i]]
        return np.sort(window[window != i])

    def anchors(self, min_positives: int) -> np.ndarray:
        """Ids that have at least ``min_positives`` neighbours."""
        return np.flatnonzero(self.counts >= min_positives)

    @property
    def pair_count(self) -> int:
        return int(self.counts.sum())


def build_positive_index(ds: Dataset, delta: float) -> PositiveIndex:
    """Exact delta-neighbour sets in O(n log n + n)."""
    with timed_block("build_positive_index", positions=len(ds), delta=delta) as ctx:
        index = PositiveIndex(np.asarray(ds.p_white), delta)
        ctx["pairs"] = index.pair_count
    return index


@dataclass(frozen=True)
class TrainBatch:
    """Token ids, probabilities and the positive mask for one step."""

    ids: np.ndarray
    tokens: np.ndarray
    p_white: np.ndarray
    mask: np.ndarray


def positive_mask(p_white: np.ndarray, delta: float) -> np.ndarray:
    """M[i][j] = (i != j and |p_i - p_j| < delta)."""
    mask = np.abs(p_white[:, None] - p_white[None, :]) < delta
    np.fill_diagonal(mask, False)
    return mask


def sample_batch(
    ds: Dataset,
    index: PositiveIndex,
    rng: np.random.Generator,
    batch_size: int = 128,
    positives_per_anchor: int = 5,
) -> TrainBatch:
    """Anchor groups of (1 anchor + sampled positives), filled up with random rows.

    With the defaults: 21 groups of 6 plus 2 fill positions = 128. Only
    positions with at least ``positives_per_anchor`` neighbours serve as
    anchors; the mask is recomputed over the whole batch.

    Raises:
        DatasetError: empty dataset or no eligible anchor
    """
    if len(ds) == 0:
        raise DatasetError("cannot sample from an empty dataset")
    eligible = index.anchors(positives_per_anchor)
    if len(eligible) == 0:
        raise DatasetError(
            f"no position has {positives_per_anchor} neighbours within delta={index.delta}"
        )
    group = positives_per_anchor + 1
    groups, fill = divmod(batch_size, group)

    ids = np.empty(batch_size, dtype=np.int64)
    for g in range(groups):
        anchor = int(eligible[rng.integers(len(eligible))])
        ids[g * group] = anchor
        ids[g * group + 1 : (g + 1) * group] = rng.choice(
            index.neighbors(anchor), size=positives_per_anchor, replace=False
        )
    if fill:
        ids[groups * group :] = rng.integers(len(ds), size=fill)

    p = np.asarray(ds.p_white[ids])
    return TrainBatch(ids=ids, tokens=ds.tokens[ids], p_white=p, mask=positive_mask(p, index.delta))
