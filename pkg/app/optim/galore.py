"""
GaLore: gradient low-rank projection around an entry-wise regularizer.

Projection is one-sided along the short dimension. For a d x k gradient with
d <= k the state keeps P (d x r, top-r left singular vectors) and the
compressed gradient is ``P.T @ G``; otherwise it keeps Q (r x k, top-r right
singular vectors) and compresses to ``G @ Q.T``. The inner regularizer (SGD or
Adam) runs on the compressed gradient, which is then projected back, scaled and
applied with the learning rate. Trainable matrices outside ``targets``, and
targets whose short side is no longer than the rank, use the inner regularizer
on the full gradient. Bases are sign-normalized so that a refresh onto the same
subspace leaves the inner moments aligned.
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from app.linalg import Matrix, svd_truncated
from app.log import log_event
from app.model.base import ParamSet
from app.optim.adam import AdamState, adam_direction
from app.optim.sgd import require_trainable_grads
from app.schemas import AdamConfig, GaloreConfig, OptimizerKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Projection:
    """Orthonormal basis of one side of a gradient's dominant subspace."""

    side: Literal["left", "right"]
    basis: Matrix

    @property
    def rank(self) -> int:
        return int(self.basis.shape[1] if self.side == "left" else self.basis.shape[0])

    def project(self, grad: Matrix) -> Matrix:
        """Compress a full gradient."""
        return self.basis.T @ grad if self.side == "left" else grad @ self.basis.T

    def project_back(self, low_rank: Matrix) -> Matrix:
        """Lift a compressed matrix back to full shape."""
        return self.basis @ low_rank if self.side == "left" else low_rank @ self.basis

    def compressed_shape(self, shape: tuple[int, int]) -> tuple[int, int]:
        d, k = shape
        return (self.rank, k) if self.side == "left" else (d, self.rank)


def _sign_normalized(rows: Matrix) -> Matrix:
    """Flip each row so its largest-magnitude entry is positive."""
    pivots = rows[np.arange(rows.shape[0]), np.argmax(np.abs(rows), axis=1)]
    return rows * np.where(pivots < 0, -1.0, 1.0)[:, None]


def build_projection(grad: Matrix, rank: int) -> Projection:
    """Top-``rank`` singular basis on the short side of ``grad`` (rank clipped to min(d, k))."""
    d, k = grad.shape
    r = min(rank, d, k)
    svd = svd_truncated(grad, r)
    if d <= k:
        return Projection("left", _sign_normalized(svd.u.T).T)
    return Projection("right", _sign_normalized(svd.vt))


@dataclass(frozen=True)
class GaloreState:
    """Per-client GaLore state."""

    config: GaloreConfig
    lr: float
    adam: AdamConfig
    projections: dict[str, Projection] = field(default_factory=dict)
    inner: AdamState | None = None
    step: int = 0
    force_refresh: bool = False
    last_updates: dict[str, Matrix] = field(default_factory=dict)

    @classmethod
    def create(cls, config: GaloreConfig, lr: float, adam: AdamConfig | None = None) -> "GaloreState":
        return cls(config=config, lr=lr, adam=adam or AdamConfig(lr=lr))

    def is_projected(self, name: str, shape: tuple[int, ...]) -> bool:
        """Targets are projected unless the rank already covers their short side."""
        return name in self.config.targets and self.config.rank < min(shape)

    def needs_refresh(self, name: str) -> bool:
        """True on the first step, every ``update_proj_gap`` steps and after a forced request."""
        return (
            name not in self.projections
            or self.step % self.config.update_proj_gap == 0
            or self.force_refresh
        )


def galore_refresh(state: GaloreState, name: str, grad: Matrix) -> GaloreState:
    """Recompute the projection of ``name`` from its current gradient."""
    projection = build_projection(grad, state.config.rank)
    projections = dict(state.projections)
    projections[name] = projection
    inner = state.inner
    if inner is not None and state.config.reset_inner_on_refresh and name in inner.m:
        inner = inner.reset([name])
    log_event(
        logger,
        "galore_refresh",
        level=logging.DEBUG,
        param=name,
        step=state.step,
        side=projection.side,
        rank=projection.rank,
    )
    return replace(state, projections=projections, inner=inner)


def _inner_shapes(state: GaloreState, params: ParamSet) -> dict[str, tuple[int, int]]:
    shapes: dict[str, tuple[int, int]] = {}
    for name in params.trainable_names:
        shape = params[name].shape
        if state.is_projected(name, shape):
            shapes[name] = state.projections[name].compressed_shape(shape)
        else:
            shapes[name] = shape
    return shapes


def galore_step(
    state: GaloreState, params: ParamSet, grads: Mapping[str, Matrix]
) -> tuple[GaloreState, ParamSet]:
    """
    One projected update of every trainable matrix.

    Raises:
        ContractError: if gradients are missing or not congruent
        NumericalError: if a projection SVD fails
    """
    require_trainable_grads(params, grads)
    for name in params.trainable_names:
        if state.is_projected(name, params[name].shape) and state.needs_refresh(name):
            state = galore_refresh(state, name, grads[name])

    compressed = {
        name: (
            state.projections[name].project(grads[name])
            if state.is_projected(name, params[name].shape)
            else grads[name]
        )
        for name in params.trainable_names
    }
    inner = state.inner
    if state.config.inner == OptimizerKind.ADAM:
        if inner is None:
            inner = AdamState.for_shapes(_inner_shapes(state, params), state.adam)
        inner, regularized = adam_direction(inner, compressed)
    else:
        regularized = compressed

    updates: dict[str, Matrix] = {}
    for name in params.trainable_names:
        if state.is_projected(name, params[name].shape):
            updates[name] = state.config.scale * state.projections[name].project_back(regularized[name])
        else:
            updates[name] = np.array(regularized[name], copy=True)

    new_params = params.replace({n: params[n] - state.lr * u for n, u in updates.items()})
    return (
        replace(state, inner=inner, step=state.step + 1, force_refresh=False, last_updates=updates),
        new_params,
    )
