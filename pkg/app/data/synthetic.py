"""Seeded synthetic classification tasks."""

import numpy as np

from app.data.dataset import DatasetKind, LabeledDataset
from app.errors import ContractError


def _balanced_labels(n: int, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n, dtype=np.int64) % num_classes)


def synth_vectors(n: int, num_classes: int, dim: int, cluster_sep: float, seed: int) -> LabeledDataset:
    """
    Gaussian clusters with unit covariance.

    When ``dim >= num_classes`` the class means are mutually orthogonal and
    pairwise ``cluster_sep`` apart; otherwise they are random directions at
    radius ``cluster_sep / 2``.

    Raises:
        ContractError: if ``n < num_classes`` or a size is not positive
    """
    if num_classes < 1 or dim < 1:
        raise ContractError("num_classes and dim must be positive")
    if n < num_classes:
        raise ContractError(f"Need at least one sample per class: n={n}, classes={num_classes}")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, num_classes, rng)
    if dim >= num_classes:
        basis, _ = np.linalg.qr(rng.normal(size=(dim, num_classes)))
        means = (cluster_sep / np.sqrt(2.0)) * basis.T
    else:
        directions = rng.normal(size=(num_classes, dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        means = (cluster_sep / 2.0) * directions
    inputs = means[labels] + rng.normal(size=(n, dim))
    return LabeledDataset(inputs, labels, num_classes, DatasetKind.VECTOR)


def synth_sequences(
    n: int,
    num_classes: int,
    vocab_size: int,
    seq_len: int,
    seed: int,
    purity: float = 0.7,
) -> LabeledDataset:
    """
    Token sequences from class-specific first-order chains.

    Class ``c`` starts at token ``2c`` and moves through its own permutation
    of the vocabulary. Every position (the first included) follows the chain
    with probability ``purity`` and is otherwise drawn uniformly; ``purity = 1``
    gives one fixed sequence per class.

    Raises:
        ContractError: if ``vocab_size < 2 * num_classes`` or ``n < num_classes``
    """
    if vocab_size < 2 * num_classes:
        raise ContractError(f"Vocabulary of {vocab_size} is too small for {num_classes} classes")
    if n < num_classes or seq_len < 1:
        raise ContractError("Need n >= num_classes and seq_len >= 1")
    if not 0.0 <= purity <= 1.0:
        raise ContractError(f"purity must lie in [0, 1], got {purity}")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, num_classes, rng)
    chains = np.stack([rng.permutation(vocab_size) for _ in range(num_classes)])
    follow = rng.random((n, seq_len)) < purity
    noise = rng.integers(0, vocab_size, size=(n, seq_len))
    tokens = np.empty((n, seq_len), dtype=np.int64)
    tokens[:, 0] = np.where(follow[:, 0], 2 * labels, noise[:, 0])
    for pos in range(1, seq_len):
        chained = chains[labels, tokens[:, pos - 1]]
        tokens[:, pos] = np.where(follow[:, pos], chained, noise[:, pos])
    return LabeledDataset(tokens, labels, num_classes, DatasetKind.SEQUENCE)
