"""Evaluation harness: alignment metrics, rank statistics, skill ratings,
and the four-condition ablation runner."""

from .ablation import CONDITIONS, run_ablation
from .controllability import (
    IntentLabel,
    controllability_metrics,
    format_report,
    intent_probe,
)
from .rating import (
    AblationRanking,
    Rating,
    TrueSkillParams,
    rater_agreement,
    trueskill_rate,
)
from .stats import dunn_posthoc, kruskal_wallis, spearman_rho

__all__ = [
    "AblationRanking",
    "CONDITIONS",
    "IntentLabel",
    "Rating",
    "TrueSkillParams",
    "controllability_metrics",
    "dunn_posthoc",
    "format_report",
    "intent_probe",
    "kruskal_wallis",
    "rater_agreement",
    "run_ablation",
    "spearman_rho",
    "trueskill_rate",
]
