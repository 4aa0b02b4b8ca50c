"""Tests for embedding projections and SVG exports."""

from pathlib import Path

import numpy as np
import pytest

from latentmate.board import IllegalMoveError, random_playout
from latentmate.planner import AdvantageAxis
from latentmate.viz import (
    TRAJECTORY_FIELDS,
    ProjectionError,
    ProjectionModel,
    export_embedding_map,
    export_trajectory,
    fit_projection,
)
from tests.conftest import FenHashScorer

GAME = ["e2e4", "e7e5", "g1f3", "b8c6", "f1b5"]


@pytest.fixture
def projection(hash_scorer: FenHashScorer) -> ProjectionModel:
    positions = random_playout(np.random.default_rng(1), max_plies=30)
    return fit_projection(hash_scorer.embed(positions))


class TestFitProjection:
    """Tests for the PCA basis."""

    def test_orthonormal_basis(self) -> None:
        """Test the two rows are orthonormal and explain at most everything."""
        z = np.random.default_rng(0).standard_normal((50, 6))
        model = fit_projection(z)
        assert np.allclose(model.basis @ model.basis.T, np.eye(2), atol=1e-10)
        assert model.explained[0] >= model.explained[1] > 0
        assert sum(model.explained) <= 1.0 + 1e-12

    def test_sign_convention(self) -> None:
        """Test each row's first nonzero coordinate is positive."""
        z = np.random.default_rng(2).standard_normal((20, 4))
        for row in fit_projection(z).basis:
            first = row[np.flatnonzero(np.abs(row) > 1e-12)[0]]
            assert first > 0

    def test_dominant_direction(self) -> None:
        """Test the first component follows the direction of largest spread."""
        rng = np.random.default_rng(4)
        z = np.column_stack([10 * rng.standard_normal(200), rng.standard_normal(200)])
        model = fit_projection(z)
        assert abs(model.basis[0, 0]) > 0.99
        assert model.project(z).shape == (200, 2)

    def test_too_few_rows(self) -> None:
        """Test two embeddings cannot be projected."""
        with pytest.raises(ProjectionError, match="at least 3"):
            fit_projection(np.eye(2, 4))

    def test_rank_one(self) -> None:
        """Test collinear embeddings are rejected."""
        z = np.outer(np.arange(5.0), np.array([1.0, 2.0, 3.0]))
        with pytest.raises(ProjectionError, match="rank"):
            fit_projection(z)


class TestTrajectory:
    """Tests for game trajectories."""

    def test_one_point_per_position(
        self, hash_scorer: FenHashScorer, hash_axis: AdvantageAxis, projection: ProjectionModel
    ) -> None:
        """Test plies + 1 points with scores in [-1, 1]."""
        export = export_trajectory(hash_scorer, hash_axis, projection, GAME)
        assert len(export) == len(GAME) + 1
        assert [p.ply for p in export.points] == list(range(len(GAME) + 1))
        assert all(-1.0 <= p.score <= 1.0 for p in export.points)
        assert export.data_path is None

    def test_files(
        self,
        hash_scorer: FenHashScorer,
        hash_axis: AdvantageAxis,
        projection: ProjectionModel,
        tmp_path: Path,
    ) -> None:
        """Test the TSV rows and the SVG are written."""
        p_white = [0.5, 0.55, 0.5, 0.6, 0.5, 0.7]
        export = export_trajectory(
            hash_scorer, hash_axis, projection, GAME, tmp_path / "game", p_white=p_white
        )
        assert export.data_path == tmp_path / "game.tsv"
        rows = export.data_path.read_text().splitlines()
        assert rows[0].split("\t") == list(TRAJECTORY_FIELDS)
        assert len(rows) == len(GAME) + 2
        assert rows[-1].split("\t")[-1] == "0.700000"
        assert export.svg_path is not None
        assert export.svg_path.read_text().lstrip().startswith("<?xml")

    def test_svg_is_reproducible(
        self,
        hash_scorer: FenHashScorer,
        hash_axis: AdvantageAxis,
        projection: ProjectionModel,
        tmp_path: Path,
    ) -> None:
        """Test two exports of the same game are byte-identical."""
        first = export_trajectory(hash_scorer, hash_axis, projection, GAME, tmp_path / "a")
        second = export_trajectory(hash_scorer, hash_axis, projection, GAME, tmp_path / "b")
        assert first.svg_path is not None and second.svg_path is not None
        assert first.svg_path.read_bytes() == second.svg_path.read_bytes()

    def test_illegal_move_names_ply(
        self, hash_scorer: FenHashScorer, hash_axis: AdvantageAxis, projection: ProjectionModel
    ) -> None:
        """Test the failing ply is reported."""
        with pytest.raises(IllegalMoveError, match="ply 2"):
            export_trajectory(hash_scorer, hash_axis, projection, ["e2e4", "e2e4"])


class TestEmbeddingMap:
    """Tests for the embedding map."""

    def test_writes_svg(
        self,
        hash_scorer: FenHashScorer,
        hash_axis: AdvantageAxis,
        projection: ProjectionModel,
        tmp_path: Path,
    ) -> None:
        """Test a scatter coloured by win probability is saved."""
        positions = random_playout(np.random.default_rng(5), max_plies=12)
        z = hash_scorer.embed(positions)
        p_white = np.linspace(0.0, 1.0, len(positions))
        path = export_embedding_map(projection, z, p_white, hash_axis, tmp_path / "map.svg")
        text = path.read_text()
        assert "<svg" in text
        assert "mu_white - mu_black" in text
