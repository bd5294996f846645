"""Custom exceptions shared by every simulator module."""

from typing import Any


class SimulatorError(Exception):
    """Base exception for simulator errors."""

    exit_code: int = 1

    def __init__(self, message: str, details: dict[str, Any] | None = None) -> None:
        self.message = message
        self.details = details or {}
        super().__init__(self.message)

    def with_context(self, **context: Any) -> "SimulatorError":
        """Attach round/step style context and return the same exception."""
        fresh = {key: value for key, value in context.items() if key not in self.details}
        self.details.update(fresh)
        if fresh:
            where = ", ".join(f"{key}={value}" for key, value in fresh.items())
            self.message = f"{self.message} ({where})"
            self.args = (self.message,)
        return self

    def to_dict(self) -> dict[str, Any]:
        """Convert to dictionary format."""
        content: dict[str, Any] = {"error": self.message, "type": type(self).__name__}
        if self.details:
            content["details"] = self.details
        return content


class ContractError(SimulatorError):
    """Raised when a precondition, shape or scheme contract is violated."""

    exit_code = 2


class RankOutOfRangeError(ContractError):
    """Raised when a requested rank lies outside [1, min(rows, cols)]."""

    def __init__(self, rank: int, rows: int, cols: int) -> None:
        super().__init__(
            f"Rank {rank} out of range for a {rows}x{cols} matrix (expected 1..{min(rows, cols)})",
            details={"rank": rank, "rows": rows, "cols": cols},
        )


class NumericalError(SimulatorError):
    """Raised on non-finite values or failed decompositions."""

    exit_code = 4

    def __init__(
        self, message: str, layer: str | None = None, details: dict[str, Any] | None = None
    ) -> None:
        details = dict(details or {})
        if layer is not None:
            details["layer"] = layer
            message = f"{message} in {layer}"
        super().__init__(message, details)


class ConfigError(SimulatorError):
    """Raised when an experiment configuration cannot be parsed or validated."""

    exit_code = 2


class DataError(SimulatorError):
    """Raised when a dataset file is malformed or a dataset is unusable."""

    exit_code = 3

    def __init__(
        self,
        message: str,
        path: str | None = None,
        row: int | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        details = dict(details or {})
        location = []
        if path is not None:
            details["path"] = path
            location.append(path)
        if row is not None:
            details["row"] = row
            location.append(f"row {row}")
        if location:
            message = f"{message} at {':'.join(location)}"
        super().__init__(message, details)


class StorageError(SimulatorError):
    """Raised when reading or writing run artifacts fails."""

    exit_code = 5
