"""
Per-step and per-aggregation metric rows and their CSV form.

Floats are written with 17 significant digits so a file read back reproduces
the logged values exactly; absent values are empty cells.
"""

import csv
import io
from collections.abc import Iterable, Iterator
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

from app.errors import DataError, StorageError

GLOBAL_CLIENT = "global"
METRICS_FILE_NAME = "metrics.csv"


@dataclass(frozen=True)
class MetricsRecord:
    """One row of ``metrics.csv``."""

    epoch: int
    round: int
    local_step: int
    client_id: str
    loss: float | None = None
    eval_loss: float | None = None
    accuracy: float | None = None
    macro_f1: float | None = None
    excess_risk: float | None = None
    agg_update_rank: int | None = None
    svd_tail_mass: float | None = None
    entropy_Wup: float | None = None
    grad_spectral_norm: float | None = None
    weight_spectral_norm: float | None = None
    bound_direct: float | None = None
    bound_ffalora: float | None = None

    @property
    def is_global(self) -> bool:
        return self.client_id == GLOBAL_CLIENT

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


COLUMNS = [f.name for f in fields(MetricsRecord)]
_INT_COLUMNS = {"epoch", "round", "local_step", "agg_update_rank"}


def format_value(value: Any) -> str:
    """CSV cell text of one value."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _parse_cell(column: str, cell: str, path: str, row: int) -> Any:
    if column == "client_id":
        return cell
    if cell == "":
        return None
    try:
        return int(cell) if column in _INT_COLUMNS else float(cell)
    except ValueError:
        raise DataError(f"Invalid value '{cell}' in column '{column}'", path=path, row=row)


class MetricsLog:
    """Ordered collection of metric rows."""

    def __init__(self, records: Iterable[MetricsRecord] | None = None) -> None:
        self.records: list[MetricsRecord] = list(records or [])

    def __iter__(self) -> Iterator[MetricsRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MetricsLog) and self.records == other.records

    def append(self, record: MetricsRecord) -> None:
        self.records.append(record)

    def extend(self, records: Iterable[MetricsRecord]) -> None:
        self.records.extend(records)

    def global_records(self) -> list[MetricsRecord]:
        """Rows logged at aggregations."""
        return [r for r in self.records if r.is_global]

    def client_records(self, client_id: str | None = None) -> list[MetricsRecord]:
        """Rows logged by clients (optionally one client)."""
        return [
            r
            for r in self.records
            if not r.is_global and (client_id is None or r.client_id == client_id)
        ]

    def to_csv_text(self) -> str:
        """Render the log, header included."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(COLUMNS)
        for record in self.records:
            writer.writerow(format_value(getattr(record, c)) for c in COLUMNS)
        return buffer.getvalue()

    def write_csv(self, path: str | Path) -> None:
        """Write the log to ``path``."""
        try:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(self.to_csv_text(), encoding="utf-8")
        except OSError as exc:
            raise StorageError(f"Cannot write {path}: {exc}", details={"path": str(path)})


def read_metrics_csv(path: str | Path) -> MetricsLog:
    """
    Parse a ``metrics.csv`` file.

    Raises:
        StorageError: if the file cannot be read
        DataError: on a missing column or a malformed cell
    """
    where = str(path)
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise StorageError(f"Cannot read {where}: {exc}", details={"path": where})
    if not rows:
        raise DataError("Empty metrics file", path=where)
    header = rows[0]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise DataError(
            f"Missing column '{missing[0]}'", path=where, row=1, details={"missing": missing}
        )
    position = {c: header.index(c) for c in COLUMNS}
    log = MetricsLog()
    for line, cells in enumerate(rows[1:], start=2):
        if not cells:
            continue
        if len(cells) != len(header):
            raise DataError(f"Expected {len(header)} cells, found {len(cells)}", path=where, row=line)
        values = {c: _parse_cell(c, cells[position[c]], where, line) for c in COLUMNS}
        log.append(MetricsRecord(**values))
    return log
