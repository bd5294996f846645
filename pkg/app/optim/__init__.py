"""Local optimizers: SGD, Adam and GaLore."""

from app.optim.adam import AdamState, adam_direction, adam_step
from app.optim.factory import (
    AdamOptimizer,
    GaloreOptimizer,
    Optimizer,
    SgdOptimizer,
    build_optimizer,
)
from app.optim.galore import GaloreState, Projection, build_projection, galore_refresh, galore_step
from app.optim.sgd import sgd_step

__all__ = [
    "AdamOptimizer",
    "AdamState",
    "GaloreOptimizer",
    "GaloreState",
    "Optimizer",
    "Projection",
    "SgdOptimizer",
    "adam_direction",
    "adam_step",
    "build_optimizer",
    "build_projection",
    "galore_refresh",
    "galore_step",
    "sgd_step",
]
