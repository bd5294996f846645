"""
Dense real matrix kernel.

Matrices are 2-D float64 numpy arrays. Every public function treats its inputs
as immutable and returns fresh arrays.
"""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from app.errors import ContractError, NumericalError, RankOutOfRangeError

Matrix = npt.NDArray[np.float64]

EPS = float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class SvdResult:
    """Thin singular value decomposition ``m = u @ diag(s) @ vt``."""

    u: Matrix
    singular_values: npt.NDArray[np.float64]
    vt: Matrix

    @property
    def rank(self) -> int:
        """Number of retained triplets."""
        return int(self.singular_values.shape[0])

    def reconstruct(self) -> Matrix:
        """Rebuild the (possibly truncated) matrix."""
        return (self.u * self.singular_values) @ self.vt

    def truncate(self, r: int) -> "SvdResult":
        """Keep the ``r`` dominant triplets."""
        return SvdResult(self.u[:, :r], self.singular_values[:r], self.vt[:r, :])


def as_matrix(value: object, name: str = "matrix") -> Matrix:
    """
    Coerce ``value`` to a finite 2-D float64 array.

    Raises:
        ContractError: if the value is not two-dimensional or has a zero dimension
        NumericalError: if any entry is NaN or infinite
    """
    m = np.asarray(value, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ContractError(f"{name} must be a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalError("Non-finite entries", layer=name)
    return m


def svd_full(m: Matrix) -> SvdResult:
    """All min(rows, cols) singular triplets, singular values nonincreasing."""
    m = as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}", details={"shape": m.shape})
    return SvdResult(u, s, vt)


def svd_truncated(m: Matrix, r: int) -> SvdResult:
    """
    The ``r`` dominant singular triplets of ``m``.

    ``u @ diag(s) @ vt`` is the best rank-``r`` Frobenius approximation of ``m``.

    Raises:
        RankOutOfRangeError: if ``r`` is not in [1, min(rows, cols)]
        NumericalError: if the decomposition fails
    """
    m = as_matrix(m)
    rows, cols = m.shape
    if not 1 <= r <= min(rows, cols):
        raise RankOutOfRangeError(r, rows, cols)
    return svd_full(m).truncate(r)


def fix_svd_signs(result: SvdResult) -> SvdResult:
    """Flip each triplet so the largest-magnitude entry of its U column is positive."""
    u = result.u.copy()
    vt = result.vt.copy()
    for j in range(u.shape[1]):
        pivot = u[int(np.argmax(np.abs(u[:, j]))), j]
        if pivot < 0:
            u[:, j] = -u[:, j]
            vt[j, :] = -vt[j, :]
    return SvdResult(u, result.singular_values.copy(), vt)


def singular_values(m: Matrix) -> npt.NDArray[np.float64]:
    """Singular values only, nonincreasing."""
    m = as_matrix(m)
    try:
        return np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}", details={"shape": m.shape})


def numerical_rank(m: Matrix, tol: float | None = None) -> int:
    """
    Count singular values above ``tol``.

    The default tolerance is max(rows, cols) * machine epsilon * largest singular value.
    """
    m = as_matrix(m)
    s = singular_values(m)
    if s.size == 0 or s[0] == 0.0:
        return 0
    if tol is None:
        tol = max(m.shape) * EPS * float(s[0])
    elif tol < 0:
        raise ContractError(f"Rank tolerance must be nonnegative, got {tol}")
    return int(np.count_nonzero(s > tol))


def tail_mass(values: npt.NDArray[np.float64], r: int) -> float:
    """Share of squared singular mass beyond the first ``r`` values."""
    energy = np.square(np.asarray(values, dtype=np.float64))
    total = float(energy.sum())
    if total == 0.0:
        return 0.0
    return float(energy[r:].sum()) / total


def gaussian_init(rows: int, cols: int, std: float, seed: int | np.random.Generator) -> Matrix:
    """I.i.d. N(0, std^2) matrix, deterministic given ``seed``."""
    if std <= 0:
        raise ContractError(f"Standard deviation must be positive, got {std}")
    if rows < 1 or cols < 1:
        raise ContractError(f"Shape must be positive, got {rows}x{cols}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.normal(0.0, std, size=(rows, cols))


def row_softmax(m: Matrix) -> Matrix:
    """Softmax over each row with max subtraction."""
    shifted = m - np.max(m, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def row_log_softmax(m: Matrix) -> Matrix:
    """Log-softmax over each row with max subtraction."""
    shifted = m - np.max(m, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def row_softmax_entropy(m: Matrix) -> float:
    """
    Sum over rows of the Shannon entropy (nats) of each row's softmax.

    Lies in [0, rows * log(cols)].
    """
    m = as_matrix(m)
    log_p = row_log_softmax(m)
    p = np.exp(log_p)
    h = -float(np.sum(p * log_p))
    return max(h, 0.0)


def frobenius_norm(m: Matrix) -> float:
    """Frobenius norm."""
    return float(np.linalg.norm(as_matrix(m), "fro"))


def spectral_norm(m: Matrix) -> float:
    """Largest singular value."""
    s = singular_values(m)
    return float(s[0]) if s.size else 0.0
