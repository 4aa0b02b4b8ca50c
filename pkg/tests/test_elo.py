"""Tests for Elo estimation."""

import math

import numpy as np
import pytest

from latentmate.elo import EloError, estimate_elo, outcome_probabilities, simulate_record
from latentmate.models import GameRecord, GameResult, MatchRecord


def _match(
    wins: int, draws: int, losses: int, anchor: float | None = 2000.0, opponent: str = "sf"
) -> MatchRecord:
    results = [GameResult.WIN] * wins + [GameResult.DRAW] * draws + [GameResult.LOSS] * losses
    return MatchRecord(
        opponent=opponent,
        anchor_rating=anchor,
        games=[
            GameRecord(index=i, engine_color="w", result=r, termination="checkmate")
            for i, r in enumerate(results)
        ],
    )


class TestOutcomeProbabilities:
    """Tests for the draw model."""

    def test_logistic_without_draws(self) -> None:
        """Test nu = 0 reduces to 1 / (1 + 10^(-d/400))."""
        win, draw, loss = outcome_probabilities(200.0, 0.0)
        assert win == pytest.approx(1 / (1 + 10 ** (-0.5)))
        assert draw == 0.0
        assert win + loss == pytest.approx(1.0)

    def test_equal_players(self) -> None:
        """Test symmetric outcomes at gap zero."""
        win, draw, loss = outcome_probabilities(0.0, 1.0)
        assert win == pytest.approx(loss)
        assert draw == pytest.approx(1 / 3)


class TestEstimateElo:
    """Tests for the MAP rating."""

    def test_three_to_one(self) -> None:
        """Test a 3:1 score sits about 191 points above the anchor."""
        estimate = estimate_elo([_match(300, 0, 100)])
        assert estimate.rating == pytest.approx(2000 + 400 * math.log10(3), abs=5)
        assert estimate.lower < estimate.rating < estimate.upper
        assert estimate.games == 400
        assert estimate.draw_parameter == 0.0

    def test_even_score(self) -> None:
        """Test a 50% score rates at the anchor."""
        estimate = estimate_elo([_match(40, 20, 40)])
        assert estimate.rating == pytest.approx(2000, abs=5)
        assert estimate.draw_parameter > 0

    def test_anchor_shift(self) -> None:
        """Test moving the anchor moves the estimate by the same amount."""
        low = estimate_elo([_match(30, 10, 20)])
        high = estimate_elo([_match(30, 10, 20)], {"sf": 2100.0})
        assert high.rating - low.rating == pytest.approx(100, abs=0.5)
        assert high.anchors == {"sf": 2100.0}

    def test_interval_shrinks_with_games(self) -> None:
        """Test more games give a narrower interval."""
        few = estimate_elo([_match(6, 0, 4)])
        many = estimate_elo([_match(600, 0, 400)])
        assert many.upper - many.lower < few.upper - few.lower

    def test_several_opponents(self) -> None:
        """Test results against two anchors land between them."""
        estimate = estimate_elo(
            [_match(15, 5, 5, 1500.0, "weak"), _match(5, 5, 15, 1900.0, "strong")]
        )
        assert 1500 < estimate.rating < 1900

    @pytest.mark.parametrize("draw_rate", [0.0, 0.3])
    def test_recovers_simulated_gap(self, draw_rate: float) -> None:
        """Test 1000 simulated games recover a 200-point gap within 60."""
        record = simulate_record(200.0, 1000, draw_rate, np.random.default_rng(3))
        estimate = estimate_elo([record])
        assert estimate.rating - 2000 == pytest.approx(200, abs=60)

    def test_all_draws(self) -> None:
        """Test only draws cannot be rated."""
        with pytest.raises(EloError, match="drawn"):
            estimate_elo([_match(0, 10, 0)])

    def test_no_records(self) -> None:
        """Test an empty list is an error."""
        with pytest.raises(EloError, match="no match records"):
            estimate_elo([])

    def test_missing_anchor(self) -> None:
        """Test an opponent without rating is named."""
        with pytest.raises(EloError, match="'sf'"):
            estimate_elo([_match(3, 0, 1, anchor=None)])


class TestSimulateRecord:
    """Tests for synthetic matches."""

    def test_shape(self) -> None:
        """Test game count and alternating colours."""
        record = simulate_record(0.0, 6, 0.2, np.random.default_rng(0), anchor=1800.0)
        assert len(record.games) == 6
        assert [g.engine_color for g in record.games] == ["w", "b"] * 3
        assert record.anchor_rating == 1800.0

    def test_bad_draw_rate(self) -> None:
        """Test the draw rate must be below one."""
        with pytest.raises(ValueError):
            simulate_record(0.0, 6, 1.0, np.random.default_rng(0))
