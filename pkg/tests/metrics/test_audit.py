"""Tests for rank-inflation diagnostics and the norm-growth audit."""

import numpy as np
import pytest

from app.metrics import (
    GLOBAL_CLIENT,
    MetricsRecord,
    norm_bound_audit,
    rank_inflation_interval,
    rank_trace,
    svd_tail_mass,
)


def _rank_two(rng: np.random.Generator, size: int = 16) -> np.ndarray:
    return rng.normal(size=(size, 2)) @ rng.normal(size=(2, size))


def _agg(round_: int, weight_norm: float, grad_norm: float) -> MetricsRecord:
    return MetricsRecord(
        epoch=0,
        round=round_,
        local_step=0,
        client_id=GLOBAL_CLIENT,
        weight_spectral_norm=weight_norm,
        grad_spectral_norm=grad_norm,
    )


class TestRankTrace:
    """Rank and tail mass of aggregated updates."""

    def test_single_client_has_no_tail(self, rng):
        """One rank-2 update keeps rank 2 and has no mass beyond rank 2."""
        update = _rank_two(rng)

        assert rank_trace(update) == 2
        assert svd_tail_mass(update, 2) == pytest.approx(0.0, abs=1e-20)

    @pytest.mark.parametrize("seed", range(10))
    def test_average_of_three_clients_inflates(self, seed):
        """Three random rank-2 updates on 16x16 average to rank 6 with tail mass at rank 2."""
        rng = np.random.default_rng(seed)
        update = sum(_rank_two(rng) for _ in range(3)) / 3

        assert rank_trace(update) == 6
        assert svd_tail_mass(update, 2) > 0

    def test_identical_clients_do_not_inflate(self, rng):
        """Averaging one update with itself keeps its rank."""
        single = _rank_two(rng)

        assert rank_trace((single + single + single) / 3) == rank_trace(single)

    def test_interval(self):
        """Ranks (2, 2, 2) on 16x16 admit [2, 6]; a 4x16 shape caps the top at 4."""
        assert rank_inflation_interval([2, 2, 2], (16, 16)) == (2, 6)
        assert rank_inflation_interval([2, 2, 2], (4, 16)) == (2, 4)


class TestNormBoundAudit:
    """||W_agg||_2 <= B0 + eta S t_agg D."""

    def test_zero_gradients_hold_with_equality(self):
        """D = 0 and an unchanged weight meet the bound exactly."""
        records = [_agg(s, 1.5, 0.0) for s in range(1, 4)]

        assert norm_bound_audit(records, eta=0.1, b0=1.5, t_agg=4) == [True, True, True]

    def test_halving_d_can_violate(self):
        """A norm that just fits the bound fails once the reported D is halved."""
        eta, b0, t_agg = 0.1, 1.0, 4
        honest = [_agg(s, b0 + eta * s * t_agg * 2.0, 2.0) for s in range(1, 4)]
        halved = [_agg(r.round, r.weight_spectral_norm, 1.0) for r in honest]  # type: ignore[arg-type]

        assert all(norm_bound_audit(honest, eta, b0, t_agg))
        assert not any(norm_bound_audit(halved, eta, b0, t_agg))

    def test_skips_client_rows_and_missing_norms(self):
        """Only aggregation rows carrying both norms are audited."""
        records = [
            MetricsRecord(epoch=0, round=1, local_step=1, client_id="0", weight_spectral_norm=9.0),
            MetricsRecord(epoch=0, round=1, local_step=0, client_id=GLOBAL_CLIENT),
            _agg(1, 1.0, 1.0),
        ]

        assert norm_bound_audit(records, eta=0.1, b0=1.0, t_agg=1) == [True]
