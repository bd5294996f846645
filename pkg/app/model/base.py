"""
Named parameter containers shared by both model families.

Matrices held by a ``ParamSet`` are never mutated in place; every update
produces a new set that may share unchanged arrays with its source.
"""

from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from app.errors import ContractError
from app.linalg import Matrix

GradSet = dict[str, Matrix]


@dataclass(frozen=True)
class ParamEntry:
    """One named weight matrix."""

    name: str
    matrix: Matrix
    trainable: bool = True


@dataclass(frozen=True)
class ParamSet:
    """Ordered, uniquely named collection of weight matrices with trainability flags."""

    entries: tuple[ParamEntry, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ContractError("Parameter names must be unique", details={"names": names})

    @classmethod
    def from_matrices(
        cls, matrices: Mapping[str, Matrix], trainable: Iterable[str] | None = None
    ) -> "ParamSet":
        """Build a set from a name -> matrix mapping (all trainable unless restricted)."""
        allowed = set(matrices) if trainable is None else set(trainable)
        return cls(
            tuple(
                ParamEntry(name, np.asarray(m, dtype=np.float64), name in allowed)
                for name, m in matrices.items()
            )
        )

    def __iter__(self) -> Iterator[ParamEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, name: object) -> bool:
        return any(e.name == name for e in self.entries)

    def __getitem__(self, name: str) -> Matrix:
        return self.entry(name).matrix

    def entry(self, name: str) -> ParamEntry:
        """Look up an entry by name."""
        for e in self.entries:
            if e.name == name:
                return e
        raise ContractError(f"Unknown parameter '{name}'", details={"names": self.names})

    @property
    def names(self) -> list[str]:
        """All names in declaration order."""
        return [e.name for e in self.entries]

    @property
    def trainable_names(self) -> list[str]:
        """Names flagged trainable, in declaration order."""
        return [e.name for e in self.entries if e.trainable]

    def matrices(self) -> dict[str, Matrix]:
        """Name -> matrix mapping."""
        return {e.name: e.matrix for e in self.entries}

    def replace(self, updates: Mapping[str, Matrix]) -> "ParamSet":
        """
        Return a new set with some matrices swapped out.

        Raises:
            ContractError: if a name is unknown or a shape changes
        """
        unknown = set(updates) - set(self.names)
        if unknown:
            raise ContractError(f"Unknown parameters: {', '.join(sorted(unknown))}")
        entries = []
        for e in self.entries:
            if e.name in updates:
                m = np.asarray(updates[e.name], dtype=np.float64)
                if m.shape != e.matrix.shape:
                    raise ContractError(
                        f"Shape mismatch for '{e.name}': {m.shape} vs {e.matrix.shape}"
                    )
                entries.append(ParamEntry(e.name, m, e.trainable))
            else:
                entries.append(e)
        return ParamSet(tuple(entries))

    def with_trainable(self, names: Iterable[str]) -> "ParamSet":
        """Return a copy whose trainable flags are exactly ``names``."""
        wanted = set(names)
        unknown = wanted - set(self.names)
        if unknown:
            raise ContractError(f"Unknown parameters: {', '.join(sorted(unknown))}")
        return ParamSet(tuple(ParamEntry(e.name, e.matrix, e.name in wanted) for e in self.entries))

    def copy(self) -> "ParamSet":
        """Deep copy of every matrix."""
        return ParamSet(tuple(ParamEntry(e.name, e.matrix.copy(), e.trainable) for e in self.entries))

    def check_congruent(self, other: "ParamSet") -> None:
        """Raise ContractError unless names, shapes and flags match."""
        if self.names != other.names:
            raise ContractError(
                "Parameter sets have different names",
                details={"left": self.names, "right": other.names},
            )
        for a, b in zip(self.entries, other.entries):
            if a.matrix.shape != b.matrix.shape or a.trainable != b.trainable:
                raise ContractError(f"Parameter '{a.name}' is not congruent")


@dataclass(frozen=True)
class Batch:
    """Inputs (feature rows or token sequences) with class labels."""

    inputs: npt.NDArray[np.generic]
    labels: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        if self.labels.ndim != 1 or self.labels.shape[0] == 0:
            raise ContractError("Batch labels must be a non-empty vector")
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.labels.shape[0]:
            raise ContractError(
                "Batch inputs must be a 2-D array with one row per label",
                details={"inputs": self.inputs.shape, "labels": self.labels.shape},
            )

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def check_labels(self, num_classes: int) -> None:
        """Raise ContractError when a label lies outside [0, num_classes)."""
        if self.labels.min() < 0 or self.labels.max() >= num_classes:
            raise ContractError(f"Labels must lie in [0, {num_classes})")


def check_grads(params: ParamSet, grads: Mapping[str, Matrix]) -> None:
    """Raise ContractError if ``grads`` is not shape-congruent with trainable ``params``."""
    for name, g in grads.items():
        if name not in params:
            raise ContractError(f"Gradient for unknown parameter '{name}'")
        if g.shape != params[name].shape:
            raise ContractError(
                f"Gradient shape mismatch for '{name}': {g.shape} vs {params[name].shape}"
            )
