"""Rank statistics: Spearman correlation, Kruskal-Wallis, Dunn post hoc.

All three share one average-rank routine (ties get the mean of the
positions they straddle). Kruskal-Wallis applies the standard tie
correction; Dunn's pairwise z uses the tie-adjusted variance and the
reported p-values are Holm step-down adjusted two-sided normal tails.
"""

from __future__ import annotations

import math

from ..errors import LengthMismatch, TooFewGroups
from .special import chi2_sf, norm_sf


def average_ranks(values: list[float]) -> list[float]:
    """Ranks 1..n with ties averaged."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j + 2) / 2.0  # mean of 1-based positions i+1 .. j+1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def _tie_sum(values: list[float]) -> float:
    """Sum of t^3 - t over tie groups."""
    counts: dict[float, int] = {}
    for value in values:
        counts[value] = counts.get(value, 0) + 1
    return float(sum(t ** 3 - t for t in counts.values() if t > 1))


def spearman_rho(x: list[float], y: list[float]) -> float:
    """Pearson correlation of the two rank vectors, ties averaged."""
    if len(x) != len(y):
        raise LengthMismatch(f"length {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise LengthMismatch("need at least 2 paired observations")
    rx = average_ranks(list(x))
    ry = average_ranks(list(y))
    n = len(rx)
    mean_x = sum(rx) / n
    mean_y = sum(ry) / n
    cov = sum((a - mean_x) * (b - mean_y) for a, b in zip(rx, ry))
    var_x = sum((a - mean_x) ** 2 for a in rx)
    var_y = sum((b - mean_y) ** 2 for b in ry)
    if var_x == 0.0 or var_y == 0.0:
        return 0.0
    return cov / math.sqrt(var_x * var_y)


def _pooled_ranks(groups: list[list[float]]) -> tuple[list[list[float]], list[float]]:
    pooled: list[float] = []
    for group in groups:
        pooled.extend(group)
    ranks = average_ranks(pooled)
    out = []
    cursor = 0
    for group in groups:
        out.append(ranks[cursor:cursor + len(group)])
        cursor += len(group)
    return out, pooled


def kruskal_wallis(groups: list[list[float]]) -> dict:
    """H statistic with tie correction and its chi-squared upper-tail p."""
    if len(groups) < 2 or any(not group for group in groups):
        raise TooFewGroups("need >= 2 non-empty groups")
    group_ranks, pooled = _pooled_ranks(groups)
    n_total = len(pooled)
    h = 12.0 / (n_total * (n_total + 1)) * sum(
        sum(ranks) ** 2 / len(ranks) for ranks in group_ranks
    ) - 3.0 * (n_total + 1)
    correction = 1.0 - _tie_sum(pooled) / (n_total ** 3 - n_total)
    if correction <= 0.0:
        h = 0.0  # every value tied: no rank variation by definition
    else:
        h = max(h / correction, 0.0)
    df = len(groups) - 1
    return {"H": h, "p": chi2_sf(h, df)}


def dunn_posthoc(groups: list[list[float]]) -> dict[tuple[int, int], dict]:
    """Pairwise Dunn z tests after Kruskal-Wallis, Holm-adjusted.

    Keys are 1-based group index pairs (i, j) with i < j. z is reported
    as a magnitude; the two-sided p is 2 * normal_sf(z).
    """
    if len(groups) < 2 or any(not group for group in groups):
        raise TooFewGroups("need >= 2 non-empty groups")
    group_ranks, pooled = _pooled_ranks(groups)
    n_total = len(pooled)
    mean_ranks = [sum(ranks) / len(ranks) for ranks in group_ranks]
    tie_term = _tie_sum(pooled) / (12.0 * (n_total - 1))
    base_var = max(n_total * (n_total + 1) / 12.0 - tie_term, 0.0)

    results: dict[tuple[int, int], dict] = {}
    pairs = [
        (i + 1, j + 1)
        for i in range(len(groups))
        for j in range(i + 1, len(groups))
    ]
    for i, j in pairs:
        se = math.sqrt(base_var * (1.0 / len(groups[i - 1]) + 1.0 / len(groups[j - 1])))
        if se == 0.0:
            z = 0.0
        else:
            z = abs(mean_ranks[i - 1] - mean_ranks[j - 1]) / se
        results[(i, j)] = {"z": z, "p_raw": 2.0 * norm_sf(z)}

    for pair, adjusted in zip(
        sorted(results, key=lambda p: results[p]["p_raw"]),
        _holm([results[p]["p_raw"] for p in sorted(results, key=lambda p: results[p]["p_raw"])]),
    ):
        results[pair]["p_adjusted"] = adjusted
    return results


def _holm(sorted_p: list[float]) -> list[float]:
    """Holm step-down adjustment; input must already be ascending."""
    m = len(sorted_p)
    adjusted = []
    running = 0.0
    for k, p in enumerate(sorted_p):
        running = max(running, (m - k) * p)
        adjusted.append(min(1.0, running))
    return adjusted
