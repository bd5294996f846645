"""Classification quality."""

import numpy as np
import numpy.typing as npt

from app.errors import ContractError


def _check(predictions: npt.ArrayLike, labels: npt.ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ContractError(
            "Predictions and labels must be vectors of the same length",
            details={"predictions": pred.shape, "labels": true.shape},
        )
    return pred, true


def accuracy(predictions: npt.ArrayLike, labels: npt.ArrayLike) -> float:
    """Share of exact matches (0 for empty input)."""
    pred, true = _check(predictions, labels)
    if true.size == 0:
        return 0.0
    return float(np.mean(pred == true))


def macro_f1(predictions: npt.ArrayLike, labels: npt.ArrayLike, num_classes: int) -> float:
    """
    Unweighted mean of per-class F1 over ``num_classes`` classes.

    A class whose F1 is undefined (no predictions and no labels, or zero
    precision and recall) contributes 0.
    """
    pred, true = _check(predictions, labels)
    if true.size and (true.min() < 0 or true.max() >= num_classes):
        raise ContractError(f"Labels must lie in [0, {num_classes})")
    scores = []
    for c in range(num_classes):
        tp = int(np.sum((pred == c) & (true == c)))
        fp = int(np.sum((pred == c) & (true != c)))
        fn = int(np.sum((pred != c) & (true == c)))
        denom = 2 * tp + fp + fn
        scores.append(2.0 * tp / denom if tp > 0 else 0.0)
    return float(np.mean(scores))
