"""
LoRA adapters on named weight matrices.

A pair on a d x k target holds ``B`` (d x r, zero at attachment) and ``A``
(r x k, Gaussian at attachment); the effective update is ``scale * B @ A``.
Pairs are exposed to the optimizers as an ordinary ``ParamSet`` with names
``<target>.lora_B`` and ``<target>.lora_A``.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace

import numpy as np

from app.errors import ContractError, RankOutOfRangeError
from app.linalg import Matrix, gaussian_init
from app.model.base import Batch, GradSet, ParamEntry, ParamSet
from app.model.network import loss_and_grads
from app.schemas import ModelConfig, ScaleConvention

B_SUFFIX = ".lora_B"
A_SUFFIX = ".lora_A"


@dataclass(frozen=True)
class LoraPair:
    """Adapter pair on one target matrix."""

    target: str
    a: Matrix
    b: Matrix
    scale: float
    frozen_a: bool = False

    @property
    def rank(self) -> int:
        return int(self.a.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.b.shape[0]), int(self.a.shape[1]))


def lora_scale(lora_alpha: float, rank: int, convention: ScaleConvention) -> float:
    """Scaling factor of the effective update."""
    if convention == ScaleConvention.DIVIDE:
        return lora_alpha / rank
    return lora_alpha


def attach_lora(
    params: ParamSet,
    targets: Sequence[str],
    r: int,
    scale: float,
    std: float,
    frozen_a: bool,
    seed: int | np.random.Generator,
) -> tuple[ParamSet, list[LoraPair]]:
    """
    Attach one pair per target and freeze the base matrices.

    Raises:
        ContractError: on an unknown target, a non-positive scale or a rank outside [1, min(d, k)]
    """
    if scale <= 0:
        raise ContractError(f"LoRA scale must be positive, got {scale}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pairs = []
    for target in targets:
        if target not in params:
            raise ContractError(f"Unknown adapter target '{target}'", details={"names": params.names})
        d, k = params[target].shape
        if not 1 <= r <= min(d, k):
            raise RankOutOfRangeError(r, d, k)
        a = gaussian_init(r, k, std, rng)
        pairs.append(LoraPair(target, a, np.zeros((d, r)), scale, frozen_a))
    still_trainable = [n for n in params.trainable_names if n not in targets]
    return params.with_trainable(still_trainable), pairs


def effective_update(pair: LoraPair) -> Matrix:
    """``scale * B @ A``."""
    return pair.scale * (pair.b @ pair.a)


def merge_lora(base: Matrix, pair: LoraPair) -> Matrix:
    """Base matrix plus the pair's effective update; ``base`` is not modified."""
    if base.shape != pair.shape:
        raise ContractError(f"Cannot merge a {pair.shape} adapter into a {base.shape} matrix")
    return base + effective_update(pair)


def lora_backward_map(grad_w: Matrix, pair: LoraPair) -> tuple[Matrix, Matrix | None]:
    """Chain a full-weight gradient into ``(grad_B, grad_A)``; grad_A is None when A is frozen."""
    grad_b = pair.scale * (grad_w @ pair.a.T)
    if pair.frozen_a:
        return grad_b, None
    return grad_b, pair.scale * (pair.b.T @ grad_w)


def merged_params(params: ParamSet, pairs: Iterable[LoraPair]) -> ParamSet:
    """Base set with every adapted target replaced by its merged weight."""
    return params.replace({p.target: merge_lora(params[p.target], p) for p in pairs})


def adapter_params(pairs: Iterable[LoraPair]) -> ParamSet:
    """Adapter matrices as a parameter set; frozen A factors are non-trainable."""
    entries: list[ParamEntry] = []
    for p in pairs:
        entries.append(ParamEntry(p.target + B_SUFFIX, p.b, True))
        entries.append(ParamEntry(p.target + A_SUFFIX, p.a, not p.frozen_a))
    return ParamSet(tuple(entries))


def update_pairs(pairs: Sequence[LoraPair], values: ParamSet) -> list[LoraPair]:
    """Write adapter matrices from ``values`` back into the pairs."""
    out = []
    for p in pairs:
        b = values[p.target + B_SUFFIX]
        a = p.a if p.frozen_a else values[p.target + A_SUFFIX]
        out.append(replace(p, a=a, b=b))
    return out


def lora_loss_and_grads(
    params: ParamSet, pairs: Sequence[LoraPair], cfg: ModelConfig, batch: Batch
) -> tuple[float, GradSet, GradSet]:
    """
    Loss through the merged weights and gradients for the adapters.

    Returns:
        (loss, adapter gradients keyed like :func:`adapter_params`, full-weight
        gradients of every target)
    """
    merged = merged_params(params, pairs)
    value, full = loss_and_grads(merged, cfg, batch, wrt=[p.target for p in pairs])
    grads: GradSet = {}
    for p in pairs:
        grad_b, grad_a = lora_backward_map(full[p.target], p)
        grads[p.target + B_SUFFIX] = grad_b
        if grad_a is not None:
            grads[p.target + A_SUFFIX] = grad_a
    return value, grads, full


def trainable_parameter_count(params: ParamSet, pairs: Sequence[LoraPair] | None = None) -> int:
    """Number of scalars a client uploads per aggregation."""
    if pairs:
        return sum(p.b.size + (0 if p.frozen_a else p.a.size) for p in pairs)
    return sum(params[n].size for n in params.trainable_names)
