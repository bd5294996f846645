"""In-memory labeled datasets."""

from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt

from app.errors import ContractError
from app.model.base import Batch


class DatasetKind(str, Enum):
    """Input layout."""

    VECTOR = "vector"
    SEQUENCE = "sequence"


@dataclass(frozen=True)
class LabeledDataset:
    """
    Rows of inputs with integer class labels.

    Vector inputs are an n x dim float matrix; sequence inputs are an
    n x seq_len integer matrix of token ids. A dataset may be empty (a
    Dirichlet shard can receive no samples); consumers that need data check
    ``len``.
    """

    inputs: npt.NDArray[np.generic]
    labels: npt.NDArray[np.int64]
    num_classes: int
    kind: DatasetKind

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise ContractError("num_classes must be positive")
        if self.inputs.ndim != 2 or self.labels.ndim != 1:
            raise ContractError("Inputs must be 2-D and labels 1-D")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ContractError(
                "Inputs and labels differ in length",
                details={"inputs": self.inputs.shape[0], "labels": self.labels.shape[0]},
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ContractError(f"Labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        """Feature dimension or sequence length."""
        return int(self.inputs.shape[1])

    def subset(self, indices: Sequence[int] | npt.NDArray[np.integer]) -> "LabeledDataset":
        """Rows at ``indices``, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.num_classes, self.kind)

    def batch(self, indices: Sequence[int] | npt.NDArray[np.integer] | None = None) -> Batch:
        """Model batch of the selected rows (all rows when omitted)."""
        if indices is None:
            return Batch(self.inputs, self.labels)
        idx = np.asarray(indices, dtype=np.int64)
        return Batch(self.inputs[idx], self.labels[idx])

    def class_histogram(self) -> list[int]:
        """Sample count per class."""
        return [int(c) for c in np.bincount(self.labels, minlength=self.num_classes)]

    @classmethod
    def concat(cls, parts: Sequence["LabeledDataset"]) -> "LabeledDataset":
        """Stack datasets of the same kind, width and class count."""
        if not parts:
            raise ContractError("Nothing to concatenate")
        first = parts[0]
        for p in parts[1:]:
            if p.kind != first.kind or p.num_classes != first.num_classes or p.width != first.width:
                raise ContractError("Datasets are not compatible")
        return cls(
            np.concatenate([p.inputs for p in parts], axis=0),
            np.concatenate([p.labels for p in parts]).astype(np.int64),
            first.num_classes,
            first.kind,
        )
