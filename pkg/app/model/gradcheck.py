"""Central finite-difference gradient oracle."""

from collections.abc import Iterable, Mapping

import numpy as np

from app.errors import ContractError
from app.linalg import Matrix
from app.model.base import Batch, GradSet, ParamSet
from app.model.network import loss
from app.schemas import ModelConfig

MIN_STEP = 1e-7
MAX_STEP = 1e-3


def finite_diff_grad(
    params: ParamSet,
    cfg: ModelConfig,
    batch: Batch,
    h: float = 1e-5,
    wrt: Iterable[str] | None = None,
) -> GradSet:
    """
    Estimate ``(L(w + h) - L(w - h)) / (2h)`` for every scalar of the selected matrices.

    Raises:
        ContractError: if ``h`` lies outside [1e-7, 1e-3]
    """
    if not MIN_STEP <= h <= MAX_STEP:
        raise ContractError(f"Finite-difference step must lie in [{MIN_STEP}, {MAX_STEP}], got {h}")
    names = list(wrt) if wrt is not None else params.trainable_names
    grads: GradSet = {}
    for name in names:
        base = params[name]
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            shifted = base.copy()
            shifted[idx] = base[idx] + h
            up = loss(params.replace({name: shifted}), cfg, batch)
            shifted[idx] = base[idx] - h
            down = loss(params.replace({name: shifted}), cfg, batch)
            g[idx] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def max_relative_error(left: Mapping[str, Matrix], right: Mapping[str, Matrix]) -> float:
    """
    Largest per-matrix ``||a - b||_F / max(||a||_F, ||b||_F, 1e-12)``.

    Raises:
        ContractError: if the two gradient sets name different matrices
    """
    if set(left) != set(right):
        raise ContractError("Gradient sets name different matrices")
    worst = 0.0
    for name, a in left.items():
        b = right[name]
        denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
        worst = max(worst, float(np.linalg.norm(a - b)) / denom)
    return worst
