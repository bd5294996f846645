"""
Adam with bias correction.

Moments live in a per-client ``AdamState`` keyed by parameter name. The same
moment arithmetic is reused by GaLore on compressed gradients.
"""

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace

import numpy as np

from app.errors import ContractError
from app.linalg import Matrix
from app.model.base import ParamSet
from app.optim.sgd import require_trainable_grads
from app.schemas import AdamConfig


@dataclass(frozen=True)
class AdamState:
    """First/second moments per matrix and the shared step counter."""

    config: AdamConfig
    m: dict[str, Matrix] = field(default_factory=dict)
    v: dict[str, Matrix] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_shapes(cls, shapes: Mapping[str, tuple[int, ...]], config: AdamConfig) -> "AdamState":
        """Zero moments for the given matrix shapes."""
        return cls(
            config=config,
            m={name: np.zeros(shape) for name, shape in shapes.items()},
            v={name: np.zeros(shape) for name, shape in shapes.items()},
        )

    @classmethod
    def for_params(cls, params: ParamSet, config: AdamConfig) -> "AdamState":
        """Zero moments for every trainable matrix of ``params``."""
        return cls.for_shapes({n: params[n].shape for n in params.trainable_names}, config)

    def reset(self, names: Iterable[str] | None = None) -> "AdamState":
        """Zero the moments of ``names`` (all when omitted); the step counter is kept."""
        targets = set(self.m) if names is None else set(names)
        m = {n: (np.zeros_like(x) if n in targets else x) for n, x in self.m.items()}
        v = {n: (np.zeros_like(x) if n in targets else x) for n, x in self.v.items()}
        return replace(self, m=m, v=v)


def adam_direction(
    state: AdamState, grads: Mapping[str, Matrix]
) -> tuple[AdamState, dict[str, Matrix]]:
    """
    Advance the moments by one step and return the bias-corrected direction.

    The direction is ``m_hat / (sqrt(v_hat) + eps)``; callers scale it by the
    learning rate.

    Raises:
        ContractError: if a gradient has no moment slot or a different shape
    """
    cfg = state.config
    t = state.step + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    m = dict(state.m)
    v = dict(state.v)
    directions: dict[str, Matrix] = {}
    for name, g in grads.items():
        if name not in m:
            raise ContractError(f"Adam state has no moments for '{name}'")
        if m[name].shape != g.shape:
            raise ContractError(f"Adam moment shape mismatch for '{name}'")
        m[name] = cfg.beta1 * m[name] + (1.0 - cfg.beta1) * g
        v[name] = cfg.beta2 * v[name] + (1.0 - cfg.beta2) * (g * g)
        directions[name] = (m[name] / bc1) / (np.sqrt(v[name] / bc2) + cfg.eps)
    return AdamState(config=cfg, m=m, v=v, step=t), directions


def adam_step(
    state: AdamState | None, params: ParamSet, grads: Mapping[str, Matrix]
) -> tuple[AdamState, ParamSet]:
    """
    Apply one Adam update to every trainable matrix.

    Raises:
        ContractError: if the state is missing or does not match the trainable set
    """
    if state is None:
        raise ContractError("Adam state is not initialized")
    require_trainable_grads(params, grads)
    if set(state.m) != set(params.trainable_names):
        raise ContractError(
            "Adam state does not match the trainable set",
            details={"state": sorted(state.m), "trainable": params.trainable_names},
        )
    state, directions = adam_direction(state, {n: grads[n] for n in params.trainable_names})
    lr = state.config.lr
    return state, params.replace({n: params[n] - lr * d for n, d in directions.items()})
