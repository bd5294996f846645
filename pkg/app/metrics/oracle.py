"""
Optimum of the convex family on pooled data and excess risk against it.
"""

import logging

import numpy as np

from app.errors import ContractError, NumericalError
from app.log import log_event
from app.model.base import Batch, ParamSet
from app.model.network import convex_hessian, loss, loss_and_grads
from app.schemas import ModelConfig, ModelFamily

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MIN_STEP = 1e-12


def _require_convex(cfg: ModelConfig) -> None:
    if cfg.family != ModelFamily.CONVEX:
        raise ContractError("The oracle optimum is only defined for the convex family")


def compute_w_star(
    batch: Batch,
    cfg: ModelConfig,
    tol: float = 1e-8,
    init: ParamSet | None = None,
    max_iter: int = 200,
) -> ParamSet:
    """
    Minimize the regularized objective over ``batch`` until ``||grad||_F <= tol``.

    Uses damped Newton steps with Armijo backtracking and falls back to the
    negative gradient whenever the Newton direction is not a descent direction.

    Raises:
        ContractError: for the transformer family or ``l2_lambda <= 0``
        NumericalError: if the tolerance is not reached within ``max_iter`` iterations
    """
    _require_convex(cfg)
    if cfg.l2_lambda <= 0:
        raise ContractError("The oracle optimum needs l2_lambda > 0")
    shape = (cfg.num_classes, cfg.feature_dim)
    params = init if init is not None else ParamSet.from_matrices({"W": np.zeros(shape)})
    params = params.with_trainable(["W"])
    value, grads = loss_and_grads(params, cfg, batch)
    for iteration in range(max_iter):
        g = grads["W"].reshape(-1)
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= tol:
            log_event(
                logger, "w_star_converged", level=logging.DEBUG, iterations=iteration, grad_norm=grad_norm
            )
            return params
        try:
            direction = -np.linalg.solve(convex_hessian(params, cfg, batch), g)
        except np.linalg.LinAlgError:
            direction = -g
        slope = float(g @ direction)
        if not np.isfinite(slope) or slope >= 0:
            direction = -g
            slope = -grad_norm * grad_norm
        step = 1.0
        while True:
            trial = params.replace({"W": params["W"] + step * direction.reshape(shape)})
            trial_value, trial_grads = loss_and_grads(trial, cfg, batch)
            if trial_value <= value + ARMIJO_C * step * slope:
                break
            # near the optimum the decrease drowns in rounding; accept progress in the gradient
            if float(np.linalg.norm(trial_grads["W"])) < 0.5 * grad_norm:
                break
            step *= 0.5
            if step < MIN_STEP:
                raise NumericalError(
                    "Line search failed", layer="W", details={"iteration": iteration, "grad_norm": grad_norm}
                )
        params, value, grads = trial, trial_value, trial_grads
    raise NumericalError(
        f"Oracle optimum did not reach tolerance {tol} in {max_iter} iterations",
        layer="W",
        details={"grad_norm": float(np.linalg.norm(grads["W"]))},
    )


def excess_risk(params: ParamSet, w_star: ParamSet, cfg: ModelConfig, batch: Batch) -> float:
    """``L(params) - L(w_star)`` on the given objective data."""
    _require_convex(cfg)
    return loss(params, cfg, batch) - loss(w_star, cfg, batch)
