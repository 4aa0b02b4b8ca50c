"""2D views of the embedding space.

A ``ProjectionModel`` is a PCA basis fitted once on a reference set and then
reused, so every map and trajectory shares one canvas. Exports are a
tab-separated data file plus an SVG rendered by matplotlib with a fixed hash
salt and no date stamp, which makes repeated exports byte-identical.

Colours follow one convention throughout: red means White is favoured, blue
means Black is favoured.
"""

import csv
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.axes import Axes
from matplotlib.figure import Figure

from .board import IllegalMoveError, Move, Position, apply_move, legal_moves, starting_position
from .errors import LatentMateError
from .logging import log_extra, timed
from .planner import AdvantageAxis, Scorer, cosine_scores

SVG_SALT = "latentmate"
AXIS_CAVEAT = (
    "The advantage axis arrow is the 2D projection of a = mu_white - mu_black; "
    "it does not show the axis' true direction in the embedding space."
)
COLORMAP = "coolwarm"
TRAJECTORY_FIELDS = ("ply", "fen", "x", "y", "score", "p_white")


class ProjectionError(LatentMateError, ValueError):
    """The reference embeddings do not span two dimensions."""


@dataclass(frozen=True)
class ProjectionModel:
    """Mean vector, two orthonormal basis rows and their explained-variance fractions."""

    mean: np.ndarray
    basis: np.ndarray
    explained: tuple[float, float]

    def project(self, embeddings: np.ndarray) -> np.ndarray:
        """(n, D) -> (n, 2)."""
        return (np.asarray(embeddings, dtype=np.float64) - self.mean) @ self.basis.T


@timed
def fit_projection(embeddings: np.ndarray, tolerance: float = 1e-10) -> ProjectionModel:
    """Top two principal components of the centered covariance.

    Each basis row is signed so its first nonzero coordinate is positive.

    Raises:
        ProjectionError: fewer than 3 rows, or rank below 2
    """
    z = np.asarray(embeddings, dtype=np.float64)
    if z.ndim != 2 or len(z) < 3:
        raise ProjectionError(f"need at least 3 embeddings, got {len(z)}")
    mean = z.mean(axis=0)
    centered = z - mean
    covariance = centered.T @ centered / (len(z) - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    total = float(eigenvalues.sum())
    if total <= tolerance or eigenvalues[1] <= tolerance * max(total, 1.0):
        raise ProjectionError("embeddings have rank < 2; nothing to project onto")

    basis = eigenvectors[:, order[:2]].T.copy()
    for row in basis:
        first = np.flatnonzero(np.abs(row) > 1e-12)[0]
        if row[first] < 0:
            row *= -1
    return ProjectionModel(
        mean=mean,
        basis=basis,
        explained=(float(eigenvalues[0] / total), float(eigenvalues[1] / total)),
    )


@dataclass(frozen=True)
class TrajectoryPoint:
    ply: int
    fen: str
    x: float
    y: float
    score: float
    p_white: float | None = None


@dataclass(frozen=True)
class TrajectoryExport:
    """One record per position of a game, the initial position included."""

    points: tuple[TrajectoryPoint, ...]
    data_path: Path | None = None
    svg_path: Path | None = None

    def __len__(self) -> int:
        return len(self.points)


def _figure() -> Figure:
    matplotlib.rcParams["svg.hashsalt"] = SVG_SALT
    return Figure(figsize=(6, 6))


def _save_svg(fig: Figure, path: Path, title: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(
        path,
        format="svg",
        metadata={"Date": None, "Title": title, "Description": AXIS_CAVEAT},
    )


def _draw_axis_arrow(ax: Axes, projection: ProjectionModel, axis: AdvantageAxis) -> None:
    tail = projection.project(axis.mu_black[None, :])[0]
    head = projection.project(axis.mu_white[None, :])[0]
    ax.annotate(
        "",
        xy=(head[0], head[1]),
        xytext=(tail[0], tail[1]),
        arrowprops={"arrowstyle": "->", "linestyle": "--", "color": "black", "lw": 1.2},
    )


def export_trajectory(
    scorer: Scorer,
    axis: AdvantageAxis,
    projection: ProjectionModel,
    moves: Sequence[str | Move],
    out_prefix: Path | None = None,
    start: Position | None = None,
    p_white: Sequence[float] | None = None,
) -> TrajectoryExport:
    """Embed every position of a game, project it and optionally write files.

    Writes ``<prefix>.tsv`` and ``<prefix>.svg`` when ``out_prefix`` is given.

    Raises:
        IllegalMoveError: a move is not legal at its ply (the message names the ply)
    """
    positions = [start or starting_position()]
    for ply, item in enumerate(moves, 1):
        move = item if isinstance(item, Move) else Move.from_uci(item)
        if move not in legal_moves(positions[-1]):
            raise IllegalMoveError(f"ply {ply}: {move.uci()} is not legal in {positions[-1].fen}")
        positions.append(apply_move(positions[-1], move))

    embeddings = scorer.embed(positions)
    xy = projection.project(embeddings)
    scores = cosine_scores(embeddings, axis)
    points = tuple(
        TrajectoryPoint(
            ply=i,
            fen=pos.fen,
            x=float(xy[i, 0]),
            y=float(xy[i, 1]),
            score=float(scores[i]),
            p_white=None if p_white is None else float(p_white[i]),
        )
        for i, pos in enumerate(positions)
    )
    if out_prefix is None:
        return TrajectoryExport(points)

    data_path = out_prefix.with_suffix(".tsv")
    svg_path = out_prefix.with_suffix(".svg")
    _write_points(points, data_path)
    _render_trajectory(points, projection, axis, svg_path)
    log_extra("Trajectory exported", plies=len(points) - 1, data=str(data_path), svg=str(svg_path))
    return TrajectoryExport(points, data_path, svg_path)


def _write_points(points: Sequence[TrajectoryPoint], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(TRAJECTORY_FIELDS)
        for p in points:
            writer.writerow(
                (
                    p.ply,
                    p.fen,
                    f"{p.x:.6f}",
                    f"{p.y:.6f}",
                    f"{p.score:.6f}",
                    "" if p.p_white is None else f"{p.p_white:.6f}",
                )
            )


def _render_trajectory(
    points: Sequence[TrajectoryPoint],
    projection: ProjectionModel,
    axis: AdvantageAxis,
    path: Path,
) -> None:
    fig = _figure()
    ax = fig.add_subplot()
    xs = np.array([p.x for p in points])
    ys = np.array([p.y for p in points])
    scores = np.array([p.score for p in points])
    for i in range(len(points) - 1):
        ax.annotate(
            "",
            xy=(xs[i + 1], ys[i + 1]),
            xytext=(xs[i], ys[i]),
            arrowprops={"arrowstyle": "->", "color": "0.5", "lw": 0.8},
        )
    sc = ax.scatter(xs, ys, c=scores, cmap=COLORMAP, vmin=-1.0, vmax=1.0, s=18, zorder=3)
    _draw_axis_arrow(ax, projection, axis)
    fig.colorbar(sc, ax=ax, label="cos(z, a)")
    ax.set_xlabel(f"PC 1 ({projection.explained[0]:.1%})")
    ax.set_ylabel(f"PC 2 ({projection.explained[1]:.1%})")
    ax.set_title(f"Latent trajectory ({len(points) - 1} plies)")
    _save_svg(fig, path, "latent trajectory")


def export_embedding_map(
    projection: ProjectionModel,
    embeddings: np.ndarray,
    p_white: np.ndarray,
    axis: AdvantageAxis,
    path: Path,
) -> Path:
    """Scatter of projected embeddings coloured by White's win probability."""
    xy = projection.project(embeddings)
    fig = _figure()
    ax = fig.add_subplot()
    sc = ax.scatter(
        xy[:, 0], xy[:, 1], c=np.asarray(p_white), cmap=COLORMAP, vmin=0.0, vmax=1.0, s=4
    )
    _draw_axis_arrow(ax, projection, axis)
    fig.colorbar(sc, ax=ax, label="P(White wins)")
    ax.set_xlabel(f"PC 1 ({projection.explained[0]:.1%})")
    ax.set_ylabel(f"PC 2 ({projection.explained[1]:.1%})")
    ax.set_title(f"Embedding map ({len(xy)} positions)")
    _save_svg(fig, path, "embedding map")
    log_extra("Embedding map exported", positions=len(xy), path=str(path))
    return path
