"""Tests for Pydantic models in latentmate.models."""

import pytest
from pydantic import ValidationError

from latentmate.models import (
    EloEstimate,
    EncoderConfig,
    GameRecord,
    GameResult,
    LossReport,
    MatchRecord,
    MatchSpec,
    PlanConfig,
)


class TestEncoderConfig:
    """Tests for EncoderConfig."""

    def test_presets(self) -> None:
        """Test the named presets."""
        small = EncoderConfig.preset("small")
        assert (small.num_layers, small.hidden_dim, small.embed_dim, small.num_heads) == (
            6,
            512,
            512,
            16,
        )
        base = EncoderConfig.preset("base")
        assert base.hidden_dim == 1024
        assert base.mlp_size == 1024

    def test_unknown_preset(self) -> None:
        """Test an unknown preset lists the choices."""
        with pytest.raises(ValueError, match="tiny"):
            EncoderConfig.preset("huge")

    def test_heads_must_divide_hidden(self) -> None:
        """Test H must be divisible by N."""
        with pytest.raises(ValidationError):
            EncoderConfig(num_layers=1, hidden_dim=10, embed_dim=8, num_heads=3, mlp_size=8)

    def test_text_round_trip(self) -> None:
        """Test the key = value form reads back."""
        config = EncoderConfig.preset("tiny")
        text = "# comment\n" + config.to_text()
        assert EncoderConfig.from_text(text) == config


class TestPlanConfig:
    """Tests for PlanConfig."""

    def test_defaults(self) -> None:
        """Test k = 3, S = 2, adversarial."""
        plan = PlanConfig()
        assert plan.beam_width == 3
        assert plan.depth == 2
        assert plan.adversarial_mode is True
        assert plan.paper_literal_mode is False

    def test_literal_flag(self) -> None:
        """Test the literal flag is the inverse of adversarial mode."""
        plan = PlanConfig.model_validate({"paper_literal_mode": True})
        assert plan.adversarial_mode is False
        assert plan.paper_literal_mode is True

    def test_flags_exclusive(self) -> None:
        """Test both modes at once is rejected."""
        with pytest.raises(ValidationError):
            PlanConfig.model_validate({"paper_literal_mode": True, "adversarial_mode": True})

    def test_bounds(self) -> None:
        """Test k and S are at least 1."""
        with pytest.raises(ValidationError):
            PlanConfig(beam_width=0)
        with pytest.raises(ValidationError):
            PlanConfig(depth=0)


class TestLossReport:
    """Tests for LossReport."""

    def test_non_finite_loss(self) -> None:
        """Test the loss must be finite."""
        with pytest.raises(ValidationError):
            LossReport(loss=float("nan"), anchors_with_positives=1)


class TestMatchModels:
    """Tests for match specs and records."""

    def test_opponent_label(self) -> None:
        """Test labels fall back to the command and its Elo cap."""
        assert MatchSpec(opponent="random-mover").opponent_label == "random-mover"
        capped = MatchSpec(opponent="stockfish", opponent_options={"UCI_Elo": "1500"})
        assert capped.opponent_label == "stockfish@1500"
        assert MatchSpec(opponent="stockfish", label="sf").opponent_label == "sf"

    def test_record_tallies(self) -> None:
        """Test win/draw/loss counts and the score."""
        results = [GameResult.WIN, GameResult.WIN, GameResult.DRAW, GameResult.LOSS]
        record = MatchRecord(
            opponent="x",
            games=[
                GameRecord(index=i, engine_color="w", result=r, termination="checkmate")
                for i, r in enumerate(results)
            ],
        )
        assert (record.wins, record.draws, record.losses) == (2, 1, 1)
        assert record.score == pytest.approx(0.625)
        assert MatchRecord(opponent="x").score == 0.0

    def test_engine_color_pattern(self) -> None:
        """Test colours are 'w' or 'b'."""
        with pytest.raises(ValidationError):
            GameRecord(index=0, engine_color="white", result=GameResult.WIN, termination="x")

    def test_games_positive(self) -> None:
        """Test a match plays at least one game."""
        with pytest.raises(ValidationError):
            MatchSpec(opponent="random-mover", games=0)


class TestEloEstimate:
    """Tests for EloEstimate."""

    def test_interval_contains_rating(self) -> None:
        """Test the point estimate must lie in its interval."""
        with pytest.raises(ValidationError):
            EloEstimate(rating=2000, lower=2010, upper=2100, draw_parameter=0, games=10)
