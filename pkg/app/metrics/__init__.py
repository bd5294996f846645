"""Measurements, oracles and bound calculators."""

from app.metrics.audit import (
    norm_bound_audit,
    rank_inflation_interval,
    rank_trace,
    svd_tail_mass,
)
from app.metrics.bounds import (
    BoundInputs,
    GeneralizationBounds,
    bound_direct,
    bound_ffalora,
    generalization_bounds,
    stated_entropy_limit,
)
from app.metrics.classification import accuracy, macro_f1
from app.metrics.oracle import compute_w_star, excess_risk
from app.metrics.records import COLUMNS, GLOBAL_CLIENT, MetricsLog, MetricsRecord, read_metrics_csv
from app.metrics.summary import EpochSummary, best_epoch_summary

__all__ = [
    "COLUMNS",
    "GLOBAL_CLIENT",
    "BoundInputs",
    "EpochSummary",
    "GeneralizationBounds",
    "MetricsLog",
    "MetricsRecord",
    "accuracy",
    "best_epoch_summary",
    "bound_direct",
    "bound_ffalora",
    "compute_w_star",
    "excess_risk",
    "generalization_bounds",
    "macro_f1",
    "norm_bound_audit",
    "rank_inflation_interval",
    "rank_trace",
    "read_metrics_csv",
    "stated_entropy_limit",
    "svd_tail_mass",
]
