"""Tests for the server aggregation rules."""

import numpy as np
import pytest

from app.adapters import LoraPair, effective_update
from app.errors import ContractError, RankOutOfRangeError
from app.federation import (
    aggregate_direct,
    aggregate_fedit,
    aggregate_ffalora,
    aggregate_flexlora,
    client_weights,
)
from app.linalg import numerical_rank
from app.metrics import rank_inflation_interval, rank_trace
from app.model import ParamSet
from app.schemas import Factorization, Weighting


def _pair(rng: np.random.Generator, d: int = 5, k: int = 6, r: int = 2, scale: float = 1.5) -> LoraPair:
    return LoraPair("W", rng.normal(size=(r, k)), rng.normal(size=(d, r)), scale)


class TestClientWeights:
    """FedAvg weights."""

    def test_uniform(self):
        """Uniform weights ignore sizes."""
        assert client_weights([1, 3], Weighting.UNIFORM) == [0.5, 0.5]

    def test_by_size(self):
        """Size weighting normalizes the sizes."""
        assert client_weights([1, 3], Weighting.BY_TRAIN_SIZE) == [0.25, 0.75]

    def test_no_clients(self):
        """An empty client list is a contract error."""
        with pytest.raises(ContractError):
            client_weights([], Weighting.UNIFORM)


class TestAggregateDirect:
    """Weighted mean of full matrices."""

    def test_identical_clients(self, rng):
        """Equal clients aggregate to themselves bitwise."""
        params = ParamSet.from_matrices({"W": rng.normal(size=(3, 4))})

        result = aggregate_direct([params, params.copy(), params.copy()])

        assert result.params is not None
        np.testing.assert_array_equal(result.params["W"], params["W"])

    def test_opposite_clients_cancel(self, rng):
        """W and -W average to zero."""
        w = rng.normal(size=(3, 4))

        result = aggregate_direct(
            [ParamSet.from_matrices({"W": w}), ParamSet.from_matrices({"W": -w})]
        )

        assert result.params is not None
        np.testing.assert_array_equal(result.params["W"], np.zeros((3, 4)))

    def test_size_weighted(self):
        """Sizes (1, 3) with values 0 and 4 give 3."""
        clients = [
            ParamSet.from_matrices({"W": np.zeros((2, 2))}),
            ParamSet.from_matrices({"W": np.full((2, 2), 4.0)}),
        ]

        result = aggregate_direct(clients, Weighting.BY_TRAIN_SIZE, sizes=[1, 3])

        assert result.params is not None
        np.testing.assert_array_equal(result.params["W"], np.full((2, 2), 3.0))

    def test_frozen_matrices_copied(self, rng):
        """Non-trainable matrices come from client 0 unchanged."""
        frozen = rng.normal(size=(2, 2))
        clients = [
            ParamSet.from_matrices({"E": frozen, "W": rng.normal(size=(2, 2))}, trainable=["W"])
            for _ in range(2)
        ]

        result = aggregate_direct(clients)

        assert result.params is not None
        np.testing.assert_array_equal(result.params["E"], frozen)
        assert result.params.trainable_names == ["W"]

    def test_updates_against_reference(self, rng):
        """With a reference the aggregated and per-client updates are reported."""
        reference = ParamSet.from_matrices({"W": rng.normal(size=(3, 3))})
        clients = [reference.replace({"W": reference["W"] + rng.normal(size=(3, 3))}) for _ in range(2)]

        result = aggregate_direct(clients, reference=reference)

        assert result.params is not None
        np.testing.assert_allclose(result.updates["W"], result.params["W"] - reference["W"], atol=1e-14)
        assert len(result.client_updates["W"]) == 2

    def test_incongruent_clients(self):
        """Clients must share names and shapes."""
        with pytest.raises(ContractError):
            aggregate_direct(
                [ParamSet.from_matrices({"W": np.zeros((2, 2))}), ParamSet.from_matrices({"W": np.zeros((2, 3))})]
            )

    def test_rank_inflation_interval_over_trials(self):
        """Averaged rank-r client updates stay within [max r_i, min(sum r_i, d, k)]."""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            d, k = (int(v) for v in rng.integers(3, 9, size=2))
            ranks = [int(r) for r in rng.integers(1, min(d, k) + 1, size=int(rng.integers(1, 4)))]
            reference = ParamSet.from_matrices({"W": rng.normal(size=(d, k))})
            clients = [
                reference.replace({"W": reference["W"] + rng.normal(size=(d, r)) @ rng.normal(size=(r, k))})
                for r in ranks
            ]

            result = aggregate_direct(clients, reference=reference)

            update = result.updates["W"]
            rank = numerical_rank(update, tol=1e-10 * np.linalg.norm(update, 2))
            low, high = rank_inflation_interval(ranks, (d, k))
            assert low <= rank <= high


class TestAggregateFedit:
    """Independent averaging of both factors."""

    def test_identical_clients(self, rng):
        """Equal pairs come back unchanged."""
        pair = _pair(rng)

        result = aggregate_fedit([[pair], [pair]])

        assert result.pairs is not None
        np.testing.assert_array_equal(result.pairs[0].a, pair.a)
        np.testing.assert_array_equal(result.pairs[0].b, pair.b)

    def test_shared_a_is_exact(self, rng):
        """With a shared A the aggregated update is the mean of client updates."""
        first = _pair(rng)
        second = LoraPair("W", first.a, rng.normal(size=first.b.shape), first.scale)

        result = aggregate_fedit([[first], [second]])

        expected = (effective_update(first) + effective_update(second)) / 2
        np.testing.assert_allclose(result.updates["W"], expected, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_generic_pairs_are_biased(self, seed):
        """mean(B) mean(A) differs from mean(BA) on random pairs."""
        rng = np.random.default_rng(seed)
        pairs = [_pair(rng), _pair(rng)]

        result = aggregate_fedit([[p] for p in pairs])

        exact = sum(effective_update(p) for p in pairs) / 2
        assert np.linalg.norm(result.updates["W"] - exact) > 1e-3

    def test_rank_mismatch(self, rng):
        """Clients must share the adapter rank."""
        with pytest.raises(ContractError):
            aggregate_fedit([[_pair(rng, r=1)], [_pair(rng, r=2)]])

    def test_target_mismatch(self, rng):
        """Clients must adapt the same targets."""
        template = _pair(rng)
        other = LoraPair("V", template.a, template.b, template.scale)

        with pytest.raises(ContractError):
            aggregate_fedit([[_pair(rng)], [other]])


class TestAggregateFlexlora:
    """Average of products and truncated redistribution."""

    def test_identical_rank_r_clients_are_recovered(self, rng):
        """Identical rank-r pairs with r_target = r reconstruct the common update."""
        pair = _pair(rng, d=8, k=7, r=3)

        result = aggregate_flexlora([[pair], [pair], [pair]], r_target=3)

        assert result.pairs is not None
        np.testing.assert_allclose(effective_update(result.pairs[0]), effective_update(pair), atol=1e-9)
        assert result.tail_mass["W"] == pytest.approx(0.0, abs=1e-20)

    def test_two_orthogonal_rank_one_updates(self):
        """Rank-1 updates s1 u1 v1^T and s2 u2 v2^T average to (s1 / 2) u1 v1^T at r_target 1."""
        u1, u2 = np.eye(4)[:, [0]], np.eye(4)[:, [1]]
        v1, v2 = np.eye(5)[[2]], np.eye(5)[[4]]
        first = LoraPair("W", v1, 3.0 * u1, 1.0)
        second = LoraPair("W", v2, 1.0 * u2, 1.0)

        result = aggregate_flexlora([[first], [second]], r_target=1)

        assert result.pairs is not None
        np.testing.assert_allclose(effective_update(result.pairs[0]), 1.5 * u1 @ v1, atol=1e-12)
        assert result.tail_mass["W"] == pytest.approx(0.25 / (2.25 + 0.25), rel=1e-12)

    @pytest.mark.parametrize("factorization", [Factorization.FOLD, Factorization.SQRT])
    @pytest.mark.parametrize("seed", range(5))
    def test_output_rank_at_most_target(self, seed, factorization):
        """The redistributed update has rank at most r_target under both factorizations."""
        rng = np.random.default_rng(seed)
        clients = [[_pair(rng, d=8, k=8, r=2)] for _ in range(3)]

        result = aggregate_flexlora(clients, r_target=2, factorization=factorization)

        assert result.pairs is not None
        assert numerical_rank(effective_update(result.pairs[0])) <= 2
        assert rank_trace(result.updates["W"]) == 6
        assert result.tail_mass["W"] > 0

    def test_factorizations_agree(self, rng):
        """Folding and square-root splitting reconstruct the same truncation."""
        clients = [[_pair(rng)] for _ in range(2)]

        fold = aggregate_flexlora(clients, r_target=2, factorization=Factorization.FOLD)
        root = aggregate_flexlora(clients, r_target=2, factorization=Factorization.SQRT)

        assert fold.pairs is not None and root.pairs is not None
        np.testing.assert_allclose(
            effective_update(fold.pairs[0]), effective_update(root.pairs[0]), atol=1e-12
        )

    def test_sign_convention(self, rng):
        """Each redistributed A row comes from a U column with a positive pivot."""
        result = aggregate_flexlora([[_pair(rng)], [_pair(rng)]], r_target=2)

        assert result.pairs is not None
        b = result.pairs[0].b
        for j in range(b.shape[1]):
            assert b[np.argmax(np.abs(b[:, j])), j] > 0

    def test_target_rank_out_of_range(self, rng):
        """r_target above min(d, k) is rejected."""
        with pytest.raises(RankOutOfRangeError):
            aggregate_flexlora([[_pair(rng)]], r_target=6)


class TestAggregateFfalora:
    """Averaging B over a shared frozen A."""

    def test_scaled_b(self, rng):
        """B1 = 2 B2 averages to 1.5 B2."""
        a = rng.normal(size=(2, 6))
        b2 = rng.normal(size=(5, 2))
        first = LoraPair("W", a, 2.0 * b2, 1.0, frozen_a=True)
        second = LoraPair("W", a, b2, 1.0, frozen_a=True)

        result = aggregate_ffalora([[first], [second]])

        assert result.pairs is not None
        np.testing.assert_allclose(result.pairs[0].b, 1.5 * b2, atol=1e-14)
        np.testing.assert_array_equal(result.pairs[0].a, a)

    def test_update_is_mean_of_client_updates(self, rng):
        """Linearity in B makes the aggregate exact."""
        a = rng.normal(size=(2, 6))
        pairs = [LoraPair("W", a, rng.normal(size=(5, 2)), 2.0, frozen_a=True) for _ in range(3)]

        result = aggregate_ffalora([[p] for p in pairs])

        expected = sum(effective_update(p) for p in pairs) / 3
        np.testing.assert_allclose(result.updates["W"], expected, atol=1e-12)

    def test_diverging_a(self, rng):
        """Clients with different A factors are rejected."""
        first = LoraPair("W", rng.normal(size=(2, 6)), np.zeros((5, 2)), 1.0, frozen_a=True)
        second = LoraPair("W", rng.normal(size=(2, 6)), np.zeros((5, 2)), 1.0, frozen_a=True)

        with pytest.raises(ContractError, match="diverge"):
            aggregate_ffalora([[first], [second]])
