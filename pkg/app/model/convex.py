"""
L2-regularized multinomial linear classifier.

``W`` is C x D; logits are ``X @ W.T``. The objective is the batch-mean
cross-entropy (or half squared error against one-hot targets) plus
``l2_lambda / 2 * ||W||_F^2``; it is strongly convex whenever ``l2_lambda > 0``.
"""

from dataclasses import dataclass

import numpy as np

from app.errors import ContractError, NumericalError
from app.linalg import Matrix, row_log_softmax, row_softmax
from app.model.base import Batch, GradSet, ParamSet
from app.schemas import ConvexLoss, ModelConfig


@dataclass(frozen=True)
class ConvexCache:
    """Activations kept for the backward pass."""

    params: ParamSet
    batch: Batch
    inputs: Matrix
    logits: Matrix


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple[int, int]]:
    return cfg.matrix_shapes


def _inputs(cfg: ModelConfig, batch: Batch) -> Matrix:
    x = np.asarray(batch.inputs, dtype=np.float64)
    if x.shape[1] != cfg.feature_dim:
        raise ContractError(f"Expected {cfg.feature_dim} features, got {x.shape[1]}")
    return x


def logits(params: ParamSet, cfg: ModelConfig, inputs: Matrix) -> Matrix:
    """Class scores for feature rows."""
    w = params["W"]
    if w.shape != (cfg.num_classes, cfg.feature_dim):
        raise ContractError(f"W has shape {w.shape}, expected {(cfg.num_classes, cfg.feature_dim)}")
    z = np.asarray(inputs, dtype=np.float64) @ w.T
    if not np.all(np.isfinite(z)):
        raise NumericalError("Non-finite activation", layer="logits")
    return z


def _one_hot(labels: np.ndarray, num_classes: int) -> Matrix:
    y = np.zeros((labels.shape[0], num_classes))
    y[np.arange(labels.shape[0]), labels] = 1.0
    return y


def forward(params: ParamSet, cfg: ModelConfig, batch: Batch) -> tuple[float, ConvexCache]:
    """Mean loss over the batch plus the L2 penalty."""
    batch.check_labels(cfg.num_classes)
    x = _inputs(cfg, batch)
    z = logits(params, cfg, x)
    n = len(batch)
    if cfg.convex_loss == ConvexLoss.CROSS_ENTROPY:
        data_loss = -float(np.sum(row_log_softmax(z)[np.arange(n), batch.labels])) / n
    else:
        residual = z - _one_hot(batch.labels, cfg.num_classes)
        data_loss = 0.5 * float(np.sum(residual * residual)) / n
    w = params["W"]
    loss = data_loss + 0.5 * cfg.l2_lambda * float(np.sum(w * w))
    if not np.isfinite(loss):
        raise NumericalError("Non-finite loss", layer="loss")
    return loss, ConvexCache(params, batch, x, z)


def _dlogits(cfg: ModelConfig, cache: ConvexCache) -> Matrix:
    n = len(cache.batch)
    y = _one_hot(cache.batch.labels, cfg.num_classes)
    if cfg.convex_loss == ConvexLoss.CROSS_ENTROPY:
        return (row_softmax(cache.logits) - y) / n
    return (cache.logits - y) / n


def backward(cfg: ModelConfig, cache: ConvexCache) -> GradSet:
    """Analytic gradient of the objective with respect to W."""
    w = cache.params["W"]
    return {"W": _dlogits(cfg, cache).T @ cache.inputs + cfg.l2_lambda * w}


def hessian(params: ParamSet, cfg: ModelConfig, batch: Batch) -> Matrix:
    """
    Dense Hessian of the objective with respect to row-major flattened W.

    Returns:
        (C*D) x (C*D) symmetric positive semidefinite matrix (definite when l2_lambda > 0)
    """
    batch.check_labels(cfg.num_classes)
    x = _inputs(cfg, batch)
    n, d = x.shape
    c = cfg.num_classes
    if cfg.convex_loss == ConvexLoss.CROSS_ENTROPY:
        p = row_softmax(logits(params, cfg, x))
        curvature = np.einsum("ia,ab->iab", p, np.eye(c)) - np.einsum("ia,ib->iab", p, p)
    else:
        curvature = np.broadcast_to(np.eye(c), (n, c, c))
    h = np.einsum("iab,id,ie->adbe", curvature, x, x).reshape(c * d, c * d) / n
    return h + cfg.l2_lambda * np.eye(c * d)
