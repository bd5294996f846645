"""Uniform optimizer interface used by the round engine."""

from abc import ABC, abstractmethod
from collections.abc import Mapping
from dataclasses import replace

from app.linalg import Matrix
from app.model.base import ParamSet
from app.optim.adam import AdamState, adam_step
from app.optim.galore import GaloreState, galore_step
from app.optim.sgd import sgd_step
from app.schemas import AdamConfig, GaloreConfig, OptimizerKind, SgdConfig


class Optimizer(ABC):
    """Stateful per-client optimizer."""

    kind: OptimizerKind

    @abstractmethod
    def step(self, params: ParamSet, grads: Mapping[str, Matrix]) -> ParamSet:
        """Return the parameters after one update."""

    def on_broadcast(self) -> None:
        """Hook run after the client receives new global weights."""


class SgdOptimizer(Optimizer):
    kind = OptimizerKind.SGD

    def __init__(self, config: SgdConfig) -> None:
        self.config = config

    def step(self, params: ParamSet, grads: Mapping[str, Matrix]) -> ParamSet:
        return sgd_step(params, grads, self.config)


class AdamOptimizer(Optimizer):
    kind = OptimizerKind.ADAM

    def __init__(self, config: AdamConfig, reset_on_broadcast: bool = False) -> None:
        self.config = config
        self.reset_on_broadcast = reset_on_broadcast
        self.state: AdamState | None = None

    def step(self, params: ParamSet, grads: Mapping[str, Matrix]) -> ParamSet:
        if self.state is None:
            self.state = AdamState.for_params(params, self.config)
        self.state, params = adam_step(self.state, params, grads)
        return params

    def on_broadcast(self) -> None:
        if self.reset_on_broadcast and self.state is not None:
            self.state = self.state.reset()


class GaloreOptimizer(Optimizer):
    kind = OptimizerKind.GALORE

    def __init__(
        self,
        config: GaloreConfig,
        lr: float,
        adam: AdamConfig,
        reset_on_broadcast: bool = False,
    ) -> None:
        self.state = GaloreState.create(config, lr, adam)
        self.reset_on_broadcast = reset_on_broadcast

    @property
    def last_updates(self) -> dict[str, Matrix]:
        """Projected update of each matrix at the latest step (before the learning rate)."""
        return self.state.last_updates

    def step(self, params: ParamSet, grads: Mapping[str, Matrix]) -> ParamSet:
        self.state, params = galore_step(self.state, params, grads)
        return params

    def on_broadcast(self) -> None:
        inner = self.state.inner
        if self.reset_on_broadcast and inner is not None:
            inner = inner.reset()
        self.state = replace(
            self.state, inner=inner, force_refresh=self.state.config.refresh_after_broadcast
        )


def build_optimizer(
    kind: OptimizerKind,
    lr: float,
    adam: AdamConfig | None = None,
    galore: GaloreConfig | None = None,
    reset_on_broadcast: bool = False,
) -> Optimizer:
    """
    Create a fresh optimizer.

    Args:
        kind: optimizer family
        lr: learning rate (also used by the GaLore inner regularizer)
        adam: Adam hyperparameters (lr is overridden by ``lr``)
        galore: GaLore settings, required for ``kind = galore``
        reset_on_broadcast: zero stateful moments whenever new global weights arrive
    """
    adam_cfg = (adam or AdamConfig()).model_copy(update={"lr": lr})
    if kind == OptimizerKind.SGD:
        return SgdOptimizer(SgdConfig(lr=lr))
    if kind == OptimizerKind.ADAM:
        return AdamOptimizer(adam_cfg, reset_on_broadcast)
    return GaloreOptimizer(galore or GaloreConfig(), lr, adam_cfg, reset_on_broadcast)
