"""Family dispatch for initialization, forward/backward and prediction."""

from collections.abc import Iterable

import numpy as np
import numpy.typing as npt

from app.errors import ContractError
from app.linalg import Matrix, gaussian_init
from app.model import convex, transformer
from app.model.base import Batch, GradSet, ParamSet
from app.schemas import ModelConfig, ModelFamily, SelectionScheme

Cache = convex.ConvexCache | transformer.TransformerCache

SELECTION_TARGETS: dict[SelectionScheme, tuple[str, ...]] = {
    SelectionScheme.ATTENTION_QKV: ("Wq", "Wk", "Wv"),
    SelectionScheme.PROJECT_UP: ("Wup",),
    SelectionScheme.CLASSIFIER_AND_PROJECT_UP: ("Wup", "Wcls"),
}


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple[int, int]]:
    """Name -> shape of every matrix of the family, in declaration order."""
    if cfg.family == ModelFamily.CONVEX:
        return convex.expected_shapes(cfg)
    return transformer.expected_shapes(cfg)


def init_params(cfg: ModelConfig, seed: int) -> ParamSet:
    """Gaussian-initialized parameters, all trainable."""
    rng = np.random.default_rng(seed)
    std = cfg.resolved_init_std
    return ParamSet.from_matrices(
        {name: gaussian_init(r, c, std, rng) for name, (r, c) in expected_shapes(cfg).items()}
    )


def select_trainable(params: ParamSet, scheme: SelectionScheme) -> ParamSet:
    """
    Flag exactly the scheme's target matrices as trainable.

    Raises:
        ContractError: if the scheme does not apply to the parameter family
    """
    if scheme == SelectionScheme.ALL:
        return params.with_trainable(params.names)
    if "W" in params:
        raise ContractError(f"Selection '{scheme.value}' is not available for the convex family")
    return params.with_trainable(SELECTION_TARGETS[scheme])


def forward(params: ParamSet, cfg: ModelConfig, batch: Batch) -> tuple[float, Cache]:
    """Batch-mean loss and the activations needed by :func:`backward`."""
    if cfg.family == ModelFamily.CONVEX:
        return convex.forward(params, cfg, batch)
    return transformer.forward(params, cfg, batch)


def loss(params: ParamSet, cfg: ModelConfig, batch: Batch) -> float:
    """Batch-mean loss only."""
    return forward(params, cfg, batch)[0]


def backward(
    params: ParamSet,
    cfg: ModelConfig,
    batch: Batch,
    cache: Cache,
    wrt: Iterable[str] | None = None,
) -> GradSet:
    """
    Analytic gradients of the batch loss.

    Args:
        params: parameters the cache was computed from
        cfg: model configuration
        batch: batch the cache was computed from
        cache: result of :func:`forward`
        wrt: names to differentiate (default: the trainable subset)

    Raises:
        ContractError: if the cache belongs to another forward pass
    """
    if cache.params is not params or cache.batch is not batch:
        raise ContractError("Forward cache does not match the given parameters and batch")
    names = list(wrt) if wrt is not None else params.trainable_names
    for name in names:
        params.entry(name)
    if cfg.family == ModelFamily.CONVEX:
        assert isinstance(cache, convex.ConvexCache)
        full = convex.backward(cfg, cache)
    else:
        assert isinstance(cache, transformer.TransformerCache)
        full = transformer.backward(cfg, cache)
    return {name: full[name] for name in names}


def loss_and_grads(
    params: ParamSet, cfg: ModelConfig, batch: Batch, wrt: Iterable[str] | None = None
) -> tuple[float, GradSet]:
    """Forward and backward in one call."""
    value, cache = forward(params, cfg, batch)
    return value, backward(params, cfg, batch, cache, wrt)


def predict_logits(params: ParamSet, cfg: ModelConfig, inputs: npt.NDArray[np.generic]) -> Matrix:
    """Class scores for a block of inputs."""
    if cfg.family == ModelFamily.CONVEX:
        return convex.logits(params, cfg, np.asarray(inputs, dtype=np.float64))
    return transformer.logits(params, cfg, inputs)


def predict(params: ParamSet, cfg: ModelConfig, inputs: npt.NDArray[np.generic]) -> npt.NDArray[np.int64]:
    """Arg-max class per input row (lowest index on ties)."""
    return np.argmax(predict_logits(params, cfg, inputs), axis=1).astype(np.int64)


def convex_hessian(params: ParamSet, cfg: ModelConfig, batch: Batch) -> Matrix:
    """Dense Hessian of the convex objective with respect to row-major W."""
    if cfg.family != ModelFamily.CONVEX:
        raise ContractError("Hessian is only available for the convex family")
    return convex.hessian(params, cfg, batch)
