"""Elo estimation from match records.

Our rating r is fitted against opponents held at fixed anchor ratings with a
Davidson draw model on the usual base-10 logistic scale. With
x = (r - R_opponent) * ln(10) / 400:

    P(win)  = e^{x/2} / (e^{x/2} + e^{-x/2} + nu)
    P(loss) = e^{-x/2} / (e^{x/2} + e^{-x/2} + nu)
    P(draw) = nu / (e^{x/2} + e^{-x/2} + nu)

With nu = 0 this is P(win) = 1 / (1 + 10^{-d/400}). The estimate is the
maximum a posteriori r under a Gaussian prior N(mean anchor, 350^2); nu is
profiled out. The 95% interval comes from the curvature of the negative log
posterior at the optimum.
"""

import math
from collections.abc import Iterable, Mapping

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import LatentMateError
from .models import EloEstimate, GameRecord, GameResult, MatchRecord

ELO_SCALE = 400.0
PRIOR_SIGMA = 350.0
SEARCH_RADIUS = 2000.0
MAX_DRAW_PARAMETER = 10.0
_LN10_400 = math.log(10) / ELO_SCALE


class EloError(LatentMateError, ValueError):
    """The records do not pin down a finite rating."""


def _tallies(
    records: Iterable[MatchRecord], anchors: Mapping[str, float] | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, dict[str, float]]:
    """Per-opponent (rating, wins, draws, losses) arrays."""
    table: dict[str, list[float]] = {}
    used: dict[str, float] = {}
    for record in records:
        rating = (anchors or {}).get(record.opponent, record.anchor_rating)
        if rating is None:
            raise EloError(f"no anchor rating for opponent {record.opponent!r}")
        used[record.opponent] = float(rating)
        row = table.setdefault(record.opponent, [float(rating), 0.0, 0.0, 0.0])
        row[1] += record.wins
        row[2] += record.draws
        row[3] += record.losses
    if not table:
        raise EloError("no match records to rate; play a match first")
    data = np.array(list(table.values()), dtype=np.float64)
    return data[:, 0], data[:, 1], data[:, 2], data[:, 3], used


def _neg_log_posterior(
    r: float,
    nu: float,
    ratings: np.ndarray,
    wins: np.ndarray,
    draws: np.ndarray,
    losses: np.ndarray,
    prior_mean: float,
) -> float:
    x = (r - ratings) * _LN10_400
    half = x / 2
    log_denominator = np.logaddexp(half, -half)
    if nu > 0:
        log_denominator = np.logaddexp(log_denominator, math.log(nu))
    log_lik = wins * (half - log_denominator) + losses * (-half - log_denominator)
    if draws.any():
        log_lik = log_lik + draws * (math.log(nu) - log_denominator)
    prior = 0.5 * ((r - prior_mean) / PRIOR_SIGMA) ** 2
    return float(-log_lik.sum() + prior)


def estimate_elo(
    records: Iterable[MatchRecord],
    anchors: Mapping[str, float] | None = None,
) -> EloEstimate:
    """MAP rating of our engine with a 95% interval.

    Args:
        records: matches against anchored opponents
        anchors: opponent label -> rating; falls back to each record's anchor

    Raises:
        EloError: no games, no decisive game, or an opponent without anchor
    """
    ratings, wins, draws, losses, used = _tallies(records, anchors)
    games = int(wins.sum() + draws.sum() + losses.sum())
    if games == 0:
        raise EloError("records contain no games")
    if wins.sum() + losses.sum() == 0:
        raise EloError(
            "all games were drawn, so the rating is unbounded; play stronger or "
            "weaker opponents to get decisive results"
        )

    prior_mean = float(ratings.mean())
    bounds = (prior_mean - SEARCH_RADIUS, prior_mean + SEARCH_RADIUS)

    def best_r(nu: float) -> tuple[float, float]:
        fit = minimize_scalar(
            _neg_log_posterior,
            bounds=bounds,
            method="bounded",
            args=(nu, ratings, wins, draws, losses, prior_mean),
            options={"xatol": 1e-6},
        )
        return float(fit.x), float(fit.fun)

    if draws.sum() == 0:
        nu = 0.0
    else:
        fit_nu = minimize_scalar(
            lambda v: best_r(v)[1],
            bounds=(1e-9, MAX_DRAW_PARAMETER),
            method="bounded",
            options={"xatol": 1e-6},
        )
        nu = float(fit_nu.x)
    rating, _ = best_r(nu)

    def objective(r: float) -> float:
        return _neg_log_posterior(r, nu, ratings, wins, draws, losses, prior_mean)

    h = 1.0
    curvature = (objective(rating + h) - 2 * objective(rating) + objective(rating - h)) / h**2
    sigma = 1.0 / math.sqrt(curvature) if curvature > 0 else PRIOR_SIGMA
    half_width = 1.96 * sigma
    return EloEstimate(
        rating=rating,
        lower=rating - half_width,
        upper=rating + half_width,
        draw_parameter=nu,
        games=games,
        anchors=used,
    )


def outcome_probabilities(gap: float, nu: float) -> tuple[float, float, float]:
    """(win, draw, loss) for a rating difference ``gap`` under draw parameter ``nu``."""
    half = gap * _LN10_400 / 2
    w, lo = math.exp(half), math.exp(-half)
    total = w + lo + nu
    return w / total, nu / total, lo / total


def simulate_record(
    gap: float,
    games: int,
    draw_rate: float,
    rng: np.random.Generator,
    anchor: float = 2000.0,
    opponent: str = "simulated",
) -> MatchRecord:
    """Synthetic match from the fitted model with true rating ``anchor + gap``.

    ``draw_rate`` is the draw probability between equal players, which fixes
    nu = 2 * draw_rate / (1 - draw_rate).
    """
    if not 0 <= draw_rate < 1:
        raise ValueError("draw_rate must be in [0, 1)")
    nu = 2 * draw_rate / (1 - draw_rate)
    p = outcome_probabilities(gap, nu)
    outcomes = rng.choice(3, size=games, p=p)
    results = (GameResult.WIN, GameResult.DRAW, GameResult.LOSS)
    return MatchRecord(
        opponent=opponent,
        anchor_rating=anchor,
        games=[
            GameRecord(
                index=i,
                engine_color="w" if i % 2 == 0 else "b",
                result=results[int(o)],
                termination="simulated",
            )
            for i, o in enumerate(outcomes)
        ],
    )
