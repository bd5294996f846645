"""Rank-inflation diagnostics and the norm-growth audit."""

from collections.abc import Sequence

from app.linalg import Matrix, numerical_rank, singular_values, tail_mass
from app.metrics.records import MetricsLog, MetricsRecord

NORM_SLACK = 1e-12


def rank_trace(update: Matrix) -> int:
    """Numerical rank of an aggregated update."""
    return numerical_rank(update)


def svd_tail_mass(update: Matrix, r_target: int) -> float:
    """Share of squared singular mass of ``update`` beyond the first ``r_target`` values."""
    return tail_mass(singular_values(update), r_target)


def rank_inflation_interval(client_ranks: Sequence[int], shape: tuple[int, int]) -> tuple[int, int]:
    """Admissible rank range ``[max r_i, min(sum r_i, d, k)]`` of an average of client updates."""
    d, k = shape
    return max(client_ranks), min(sum(client_ranks), d, k)


def norm_bound_audit(
    records: MetricsLog | Sequence[MetricsRecord], eta: float, b0: float, t_agg: int
) -> list[bool]:
    """
    Check ``||W_agg||_2 <= b0 + eta * S * t_agg * D`` at every aggregation.

    ``S`` is the record's round and ``D`` its logged running-max gradient
    spectral norm. Records without both norms are skipped.
    """
    results = []
    for record in records:
        if not record.is_global:
            continue
        if record.weight_spectral_norm is None or record.grad_spectral_norm is None:
            continue
        bound = b0 + eta * record.round * t_agg * record.grad_spectral_norm
        results.append(record.weight_spectral_norm <= bound + NORM_SLACK * max(1.0, bound))
    return results
