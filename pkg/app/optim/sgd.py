"""Plain stochastic gradient descent."""

from collections.abc import Mapping

from app.errors import ContractError
from app.linalg import Matrix
from app.model.base import ParamSet, check_grads
from app.schemas import SgdConfig


def require_trainable_grads(params: ParamSet, grads: Mapping[str, Matrix]) -> None:
    """Raise ContractError unless every trainable matrix has a congruent gradient."""
    check_grads(params, grads)
    missing = [name for name in params.trainable_names if name not in grads]
    if missing:
        raise ContractError(f"Missing gradients for: {', '.join(missing)}")


def sgd_step(params: ParamSet, grads: Mapping[str, Matrix], cfg: SgdConfig) -> ParamSet:
    """Decrement every trainable matrix by ``lr * grad``; frozen matrices are untouched."""
    require_trainable_grads(params, grads)
    return params.replace({name: params[name] - cfg.lr * grads[name] for name in params.trainable_names})
