"""Best-epoch summaries of a run."""

from dataclasses import asdict, dataclass
from typing import Any

from app.errors import DataError
from app.metrics.records import MetricsLog, MetricsRecord


@dataclass(frozen=True)
class EpochSummary:
    """Pooled-eval quality of the global model at the end of one epoch."""

    epoch: int
    round: int
    macro_f1: float
    accuracy: float | None
    eval_loss: float | None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def epoch_end_records(log: MetricsLog) -> dict[int, MetricsRecord]:
    """Last aggregation record of each epoch that carries a macro-F1."""
    ends: dict[int, MetricsRecord] = {}
    for record in log.global_records():
        if record.macro_f1 is not None:
            ends[record.epoch] = record
    return ends


def best_epoch_summary(log: MetricsLog) -> EpochSummary:
    """
    Epoch whose final global model has the highest macro-F1 (earliest on ties).

    Raises:
        DataError: if no aggregation record carries a macro-F1
    """
    ends = epoch_end_records(log)
    if not ends:
        raise DataError("No aggregation rows with macro_f1 in metrics log")
    best = None
    for epoch in sorted(ends):
        record = ends[epoch]
        if best is None or record.macro_f1 > best.macro_f1:  # type: ignore[operator]
            best = record
    assert best is not None and best.macro_f1 is not None
    return EpochSummary(best.epoch, best.round, best.macro_f1, best.accuracy, best.eval_loss)
