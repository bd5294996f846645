"""
Closed-form excess-risk and generalization bounds.

All calculators are literal formula evaluations over explicit inputs; none of
them is estimated from data.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

from app.errors import ContractError
from app.linalg import Matrix, row_softmax_entropy


@dataclass(frozen=True)
class BoundInputs:
    """
    Constants of the bound formulas.

    Attributes:
        D: gradient bound (measured max spectral norm)
        N: number of clients
        S: number of aggregations
        t_agg: local steps between aggregations
        c: additive constant of the excess-risk bounds
        alpha: learning rate
        w_star_norm: spectral norm of the optimal update
        sigma: sub-Gaussian parameter
        n: samples per client
        q: bits per parameter
        d, k: weight matrix shape
        r: rank of the low-rank parameterization
    """

    D: float = 0.0
    N: int = 1
    S: int = 0
    t_agg: int = 1
    c: float = 0.0
    alpha: float = 0.0
    w_star_norm: float = 0.0
    sigma: float = 1.0
    n: int = 1
    q: int = 32
    d: int = 1
    k: int = 1
    r: int = 1


@dataclass(frozen=True)
class GeneralizationBounds:
    """Generalization error bounds for full, entropy-weighted and low-rank weights."""

    full: float
    entropy: float
    low_rank: float
    entropy_stated_limit: float

    def to_dict(self) -> dict[str, float]:
        return {
            "E1": self.full,
            "E2": self.entropy,
            "E3": self.low_rank,
            "E2_stated_limit": self.entropy_stated_limit,
        }


def bound_direct(b: BoundInputs) -> float:
    """Excess-risk bound of direct weight averaging: ``alpha * D^2 * S * t_agg + c``."""
    return b.alpha * b.D * b.D * b.S * b.t_agg + b.c


def bound_ffalora(b: BoundInputs) -> float:
    """Excess-risk bound with a frozen shared A: ``m * (m * c + alpha / N * ||dW*||)`` with ``m = D N S t_agg``."""
    m = b.D * b.N * b.S * b.t_agg
    return m * (m * b.c + (b.alpha / b.N) * b.w_star_norm)


def stated_entropy_limit(b: BoundInputs) -> float:
    """Uniform-row limit of the entropy bound in the form ``sqrt(2 sigma^2 d / (n k) * log k)``."""
    return math.sqrt(2.0 * b.sigma**2 * b.d / (b.n * b.k) * math.log(b.k))


def generalization_bounds(b: BoundInputs, weights: Sequence[Matrix]) -> GeneralizationBounds:
    """
    Per-client averaged bounds over the given client weight matrices.

    The entropy term uses the row-softmax entropy of each matrix; the other
    two depend only on shapes and constants.
    """
    if not weights:
        raise ContractError("At least one weight matrix is required")
    scale = 2.0 * b.sigma**2 / b.n
    full = math.sqrt(scale * b.q * b.d * b.k)
    entropy = sum(math.sqrt(scale * row_softmax_entropy(w)) for w in weights) / len(weights)
    low_rank = math.sqrt(scale * math.log(2.0) * b.r * b.q * b.d)
    return GeneralizationBounds(full, entropy, low_rank, stated_entropy_limit(b))
