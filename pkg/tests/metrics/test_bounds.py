"""Tests for the closed-form bound calculators."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.errors import ContractError
from app.metrics import (
    BoundInputs,
    bound_direct,
    bound_ffalora,
    generalization_bounds,
    stated_entropy_limit,
)


class TestExcessRiskBounds:
    """bound_direct and bound_ffalora."""

    def test_direct_arithmetic(self):
        """alpha 0.01, D 1, S 3, t_agg 4, c 0.5 gives 0.62."""
        b = BoundInputs(alpha=0.01, D=1.0, S=3, t_agg=4, c=0.5)

        assert bound_direct(b) == pytest.approx(0.62, rel=1e-12)

    def test_ffalora_arithmetic(self):
        """D 1, N 2, S 3, t_agg 4, c 0.5, alpha 0.01, ||dW*|| 2 gives 24 * 12.01."""
        b = BoundInputs(D=1.0, N=2, S=3, t_agg=4, c=0.5, alpha=0.01, w_star_norm=2.0)

        assert bound_ffalora(b) == pytest.approx(288.24, rel=1e-12)

    def test_degenerate_schedule(self):
        """S = 0 leaves c for the direct bound and zero for the frozen-A bound."""
        b = BoundInputs(D=2.0, N=3, S=0, t_agg=5, c=0.7, alpha=0.1, w_star_norm=1.0)

        assert bound_direct(b) == 0.7
        assert bound_ffalora(b) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(
        st.floats(min_value=0.1, max_value=5.0),
        st.integers(min_value=1, max_value=8),
        st.integers(min_value=1, max_value=20),
        st.integers(min_value=1, max_value=10),
        st.floats(min_value=0.01, max_value=3.0),
    )
    def test_ratio_is_quadratic_without_learning_rate_terms(self, d_bound, clients, rounds, t_agg, c):
        """With alpha = 0 the ratio of the bounds is exactly (D N S t_agg)^2."""
        b = BoundInputs(D=d_bound, N=clients, S=rounds, t_agg=t_agg, c=c, alpha=0.0, w_star_norm=1.0)

        ratio = bound_ffalora(b) / bound_direct(b)

        assert ratio == pytest.approx((d_bound * clients * rounds * t_agg) ** 2, rel=1e-10)

    def test_ratio_grows_with_clients(self):
        """The frozen-A bound overtakes the direct bound as N grows."""
        ratios = [
            bound_ffalora(BoundInputs(D=1.0, N=n, S=2, t_agg=3, c=0.5, alpha=0.01, w_star_norm=1.0))
            / bound_direct(BoundInputs(D=1.0, N=n, S=2, t_agg=3, c=0.5, alpha=0.01))
            for n in (1, 2, 4, 8)
        ]

        assert all(a < b for a, b in zip(ratios, ratios[1:]))


class TestGeneralizationBounds:
    """Full, entropy-weighted and low-rank bounds."""

    def test_full_weight_bound(self):
        """sigma 1, n 100, q 32, d = k = 4 gives E1 = 3.2."""
        b = BoundInputs(sigma=1.0, n=100, q=32, d=4, k=4, r=2)

        bounds = generalization_bounds(b, [np.zeros((4, 4))])

        assert bounds.full == pytest.approx(3.2, rel=1e-12)

    def test_low_rank_bound(self):
        """r = 2 gives E3 = sqrt(2 ln 2 / 100 * 2 * 32 * 4), about 1.884."""
        b = BoundInputs(sigma=1.0, n=100, q=32, d=4, k=4, r=2)

        bounds = generalization_bounds(b, [np.zeros((4, 4))])

        assert bounds.low_rank == pytest.approx(math.sqrt(2 * math.log(2) / 100 * 2 * 32 * 4), rel=1e-12)
        assert bounds.low_rank == pytest.approx(1.884, abs=1e-3)

    def test_entropy_bound_at_uniform_rows(self):
        """Uniform rows give E2 = sqrt(0.02 * 4 * ln 4), about 0.333."""
        b = BoundInputs(sigma=1.0, n=100, q=32, d=4, k=4, r=2)

        bounds = generalization_bounds(b, [np.ones((4, 4))])

        assert bounds.entropy == pytest.approx(math.sqrt(0.02 * 4 * math.log(4)), rel=1e-12)
        assert bounds.entropy == pytest.approx(0.333, abs=1e-3)

    def test_stated_limit_is_reported_separately(self):
        """The stated uniform-row limit differs from direct substitution and is only logged."""
        b = BoundInputs(sigma=1.0, n=100, q=32, d=4, k=4, r=2)

        bounds = generalization_bounds(b, [np.ones((4, 4))])

        assert bounds.entropy_stated_limit == pytest.approx(stated_entropy_limit(b))
        assert bounds.entropy_stated_limit == pytest.approx(math.sqrt(0.02 * math.log(4)), rel=1e-12)
        assert bounds.to_dict()["E2_stated_limit"] != bounds.to_dict()["E2"]

    def test_entropy_bound_averages_clients(self):
        """E2 is the mean of the per-client terms."""
        b = BoundInputs(sigma=1.0, n=50, q=32, d=3, k=5, r=1)
        uniform, peaked = np.zeros((3, 5)), np.diag([50.0, 50.0, 50.0]) @ np.eye(3, 5)

        both = generalization_bounds(b, [uniform, peaked]).entropy
        single = [generalization_bounds(b, [w]).entropy for w in (uniform, peaked)]

        assert both == pytest.approx(sum(single) / 2, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(min_value=1, max_value=6),
        st.integers(min_value=2, max_value=6),
        st.floats(min_value=0.01, max_value=20.0),
        st.integers(min_value=0, max_value=1000),
    )
    def test_entropy_bound_below_full_bound(self, d, k, scale, seed):
        """With q = 32, E2 <= E1 for every matrix."""
        b = BoundInputs(sigma=1.0, n=100, q=32, d=d, k=k, r=1)
        w = scale * np.random.default_rng(seed).normal(size=(d, k))

        bounds = generalization_bounds(b, [w])

        assert bounds.entropy <= bounds.full

    def test_needs_weights(self):
        """At least one client matrix is required."""
        with pytest.raises(ContractError):
            generalization_bounds(BoundInputs(), [])
