"""Tests for the convex optimum and excess risk."""

import numpy as np
import pytest

from app.data import synth_vectors
from app.errors import ContractError
from app.metrics import compute_w_star, excess_risk
from app.model import Batch, ParamSet, init_params, loss, loss_and_grads
from app.schemas import ConvexLoss, ModelConfig, ModelFamily


@pytest.fixture
def separable() -> Batch:
    """Well separated four-class clusters."""
    return synth_vectors(200, 4, 6, 4.0, 3).batch()


@pytest.fixture
def cfg() -> ModelConfig:
    return ModelConfig(family=ModelFamily.CONVEX, num_classes=4, feature_dim=6, l2_lambda=0.01)


class TestComputeWStar:
    """Damped Newton solve of the regularized objective."""

    def test_squared_loss_matches_normal_equations(self, separable):
        """For squared loss W* = (Y^T X / n)(X^T X / n + lambda I)^-1."""
        cfg = ModelConfig(
            family=ModelFamily.CONVEX,
            num_classes=4,
            feature_dim=6,
            l2_lambda=0.05,
            convex_loss=ConvexLoss.SQUARED,
        )
        x, n = separable.inputs, len(separable)
        y = np.eye(4)[separable.labels]

        w_star = compute_w_star(separable, cfg)
        closed = (y.T @ x / n) @ np.linalg.inv(x.T @ x / n + 0.05 * np.eye(6))

        np.testing.assert_allclose(w_star["W"], closed, atol=1e-8)

    def test_gradient_below_tolerance(self, separable, cfg):
        """The returned point satisfies the stopping rule."""
        w_star = compute_w_star(separable, cfg, tol=1e-9)

        _, grads = loss_and_grads(w_star, cfg, separable)

        assert np.linalg.norm(grads["W"]) <= 1e-9

    def test_restart_reaches_same_optimum(self, separable, cfg):
        """A different start converges to the same W* within 1e-6."""
        from_zero = compute_w_star(separable, cfg)
        from_random = compute_w_star(separable, cfg, init=init_params(cfg.model_copy(update={"init_std": 2.0}), 5))

        np.testing.assert_allclose(from_zero["W"], from_random["W"], atol=1e-6)

    def test_rejects_transformer(self, transformer_cfg, sequence_batch):
        """The optimum is defined only for the convex family."""
        with pytest.raises(ContractError):
            compute_w_star(sequence_batch, transformer_cfg)

    def test_rejects_zero_lambda(self, separable):
        """Without regularization the optimum may not exist."""
        cfg = ModelConfig(family=ModelFamily.CONVEX, num_classes=4, feature_dim=6, l2_lambda=0.0)

        with pytest.raises(ContractError):
            compute_w_star(separable, cfg)


class TestExcessRisk:
    """Suboptimality against W*."""

    def test_zero_at_optimum(self, separable, cfg):
        """W* itself has no excess risk."""
        w_star = compute_w_star(separable, cfg)

        assert abs(excess_risk(w_star, w_star, cfg, separable)) <= 1e-10

    def test_zero_weights_are_suboptimal(self, separable, cfg):
        """W = 0 on separable data has strictly positive excess risk."""
        w_star = compute_w_star(separable, cfg)
        zero = ParamSet.from_matrices({"W": np.zeros((4, 6))})

        assert excess_risk(zero, w_star, cfg, separable) > 0

    def test_matches_independent_losses(self, separable, cfg, rng):
        """Excess risk is the difference of the two objective values."""
        w_star = compute_w_star(separable, cfg)
        params = ParamSet.from_matrices({"W": rng.normal(size=(4, 6))})

        expected = loss(params, cfg, separable) - loss(w_star, cfg, separable)

        assert excess_risk(params, w_star, cfg, separable) == pytest.approx(expected, rel=1e-12)
