"""Gaussian skill ratings over pairwise-decomposed rankings.

Each k-way ranking is broken into its k(k-1)/2 ordered pairs and every
pair applied as a two-player win/loss update: dynamics noise tau is added
to both variances, the mean shift is scaled by the truncated-Gaussian
correction v and the variance shrink by w, with a draw margin derived
from the configured draw probability. Updates run in a fixed order
(rankings sorted by item id, pairs in rank-position order) so results are
byte-stable regardless of input order and exactly symmetric under
renaming conditions.

This pairwise decomposition approximates the full multi-team factor-graph
solver; at evaluation scale it reproduces orderings faithfully and is
deterministic, which is what the harness needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import InvalidPermutation
from .special import norm_cdf, norm_pdf, norm_ppf


@dataclass(frozen=True)
class TrueSkillParams:
    mu0: float = 25.0
    sigma0: float = 25.0 / 3.0
    beta: float = 25.0 / 6.0
    tau: float = 25.0 / 300.0
    p_draw: float = 0.1


@dataclass
class Rating:
    mu: float
    sigma: float

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class AblationRanking:
    """One rater's ordering of the ablation conditions for one item,
    best first."""

    item_id: str
    ranking: tuple[str, ...]
    dimension: str = "credibility"
    rater_id: str = "rater"

    def __post_init__(self):
        object.__setattr__(self, "ranking", tuple(self.ranking))
        if len(set(self.ranking)) != len(self.ranking) or not self.ranking:
            raise InvalidPermutation(f"ranking {self.ranking!r} is not a permutation")


def _draw_margin(params: TrueSkillParams) -> float:
    return norm_ppf((params.p_draw + 1.0) / 2.0) * math.sqrt(2.0) * params.beta


def _v_win(t: float) -> float:
    denom = norm_cdf(t)
    if denom < 1e-300:
        return -t  # asymptote of pdf/cdf far in the left tail
    return norm_pdf(t) / denom


def _w_win(t: float) -> float:
    v = _v_win(t)
    return v * (v + t)


def _update_pair(winner: Rating, loser: Rating, params: TrueSkillParams) -> None:
    var_w = winner.sigma ** 2 + params.tau ** 2
    var_l = loser.sigma ** 2 + params.tau ** 2
    c_sq = var_w + var_l + 2.0 * params.beta ** 2
    c = math.sqrt(c_sq)
    t = (winner.mu - loser.mu) / c
    eps = _draw_margin(params) / c
    v = _v_win(t - eps)
    w = _w_win(t - eps)
    winner.mu = winner.mu + (var_w / c) * v
    loser.mu = loser.mu - (var_l / c) * v
    winner.sigma = math.sqrt(var_w * max(1.0 - (var_w / c_sq) * w, 1e-12))
    loser.sigma = math.sqrt(var_l * max(1.0 - (var_l / c_sq) * w, 1e-12))


def trueskill_rate(
    rankings: list[AblationRanking],
    params: TrueSkillParams | None = None,
    conditions: tuple[str, ...] = (),
) -> dict[str, Rating]:
    """Final (mu, sigma) per condition after all ranking evidence.

    Conditions never mentioned by any ranking stay at their priors; pass
    `conditions` to emit them anyway."""
    params = params or TrueSkillParams()
    ratings: dict[str, Rating] = {
        condition: Rating(params.mu0, params.sigma0) for condition in conditions
    }
    for ranking in rankings:
        for condition in ranking.ranking:
            ratings.setdefault(condition, Rating(params.mu0, params.sigma0))

    ordered = sorted(rankings, key=lambda r: (r.item_id, r.dimension, r.rater_id))
    for ranking in ordered:
        # pairs in rank-position order (best-vs-2nd, best-vs-3rd, ...):
        # deterministic and invariant under renaming conditions, which the
        # swap-symmetry contract requires
        for i, winner in enumerate(ranking.ranking):
            for loser in ranking.ranking[i + 1:]:
                _update_pair(ratings[winner], ratings[loser], params)
    return ratings


def rater_agreement(rankings: list[AblationRanking]) -> dict:
    """Spearman agreement between raters over shared ranked items.

    Multi-rater agreement has no single canonical reduction to one number,
    so both views are returned: rho per rater pair (over the concatenated
    condition positions of every (item, dimension) both raters ranked) and
    the mean across pairs.
    """
    from .stats import spearman_rho

    by_rater: dict[str, dict[tuple[str, str], dict[str, int]]] = {}
    for ranking in rankings:
        positions = {condition: i for i, condition in enumerate(ranking.ranking)}
        by_rater.setdefault(ranking.rater_id, {})[
            (ranking.item_id, ranking.dimension)
        ] = positions

    raters = sorted(by_rater)
    pairs: dict[tuple[str, str], float] = {}
    for i, first in enumerate(raters):
        for second in raters[i + 1:]:
            shared = sorted(set(by_rater[first]) & set(by_rater[second]))
            x: list[float] = []
            y: list[float] = []
            for key in shared:
                conditions = sorted(
                    set(by_rater[first][key]) & set(by_rater[second][key])
                )
                x.extend(float(by_rater[first][key][c]) for c in conditions)
                y.extend(float(by_rater[second][key][c]) for c in conditions)
            if len(x) >= 2:
                pairs[(first, second)] = spearman_rho(x, y)
    mean = sum(pairs.values()) / len(pairs) if pairs else 0.0
    return {"pairs": pairs, "mean": mean}
