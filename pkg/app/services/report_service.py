"""
Report service behind the ``report`` command.

Summarizes each run by its best epoch (highest pooled-eval macro-F1) and
optionally draws per-aggregation curves of eval loss and macro-F1 as SVG.
Chart bytes depend only on the input files.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from app.errors import StorageError  # noqa: E402
from app.log import log_event  # noqa: E402
from app.metrics.records import METRICS_FILE_NAME, MetricsLog, read_metrics_csv  # noqa: E402
from app.metrics.summary import EpochSummary, best_epoch_summary  # noqa: E402

logger = logging.getLogger(__name__)

CHART_METRICS = ("eval_loss", "macro_f1")
CHART_LABELS = {"eval_loss": "Pooled eval loss", "macro_f1": "Pooled eval macro-F1"}
SVG_SALT = "fedsim-report"


@dataclass(frozen=True)
class RunSummary:
    """Best epoch of one metrics file."""

    label: str
    path: Path
    best: EpochSummary
    rounds: int


@dataclass
class Report:
    """Summary rows plus any charts written."""

    runs: list[RunSummary]
    charts: list[Path] = field(default_factory=list)

    def table(self) -> str:
        """Fixed-width summary table, one row per run."""
        header = ("run", "best_epoch", "round", "macro_f1", "accuracy", "eval_loss", "rounds")
        rows = [header]
        for run in self.runs:
            rows.append(
                (
                    run.label,
                    str(run.best.epoch),
                    str(run.best.round),
                    f"{run.best.macro_f1:.4f}",
                    "" if run.best.accuracy is None else f"{run.best.accuracy:.4f}",
                    "" if run.best.eval_loss is None else f"{run.best.eval_loss:.4f}",
                    str(run.rounds),
                )
            )
        widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
        return "\n".join(lines) + "\n"


def run_label(path: Path) -> str:
    """Parent directory for ``metrics.csv`` files, else the file stem."""
    if path.name == METRICS_FILE_NAME and path.parent.name:
        return path.parent.name
    return path.stem


def _curve(log: MetricsLog, metric: str) -> tuple[list[int], list[float]]:
    xs: list[int] = []
    ys: list[float] = []
    for record in log.global_records():
        value = getattr(record, metric)
        if value is not None:
            xs.append(record.round)
            ys.append(value)
    return xs, ys


def write_charts(logs: list[tuple[str, MetricsLog]], charts_dir: Path) -> list[Path]:
    """One SVG line chart per metric with a labeled series per run."""
    try:
        charts_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"Cannot create {charts_dir}: {exc}", details={"path": str(charts_dir)})
    written = []
    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        for metric in CHART_METRICS:
            fig, ax = plt.subplots(figsize=(8, 4.5))
            for label, log in logs:
                xs, ys = _curve(log, metric)
                ax.plot(xs, ys, "o-", label=label, markersize=3, linewidth=1.5)
            ax.set_xlabel("Aggregation step")
            ax.set_ylabel(CHART_LABELS[metric])
            ax.legend(fontsize=8, loc="best")
            fig.tight_layout()
            path = charts_dir / f"{metric}.svg"
            try:
                fig.savefig(path, format="svg", metadata={"Date": None})
            except OSError as exc:
                raise StorageError(f"Cannot write {path}: {exc}", details={"path": str(path)})
            finally:
                plt.close(fig)
            written.append(path)
    return written


def cmd_report(paths: list[str | Path], charts_dir: str | Path | None = None) -> Report:
    """
    Summarize metrics files and optionally chart them.

    Raises:
        DataError: on a malformed file (names the file and line or column)
        StorageError: if a file cannot be read or a chart cannot be written
    """
    runs = []
    logs = []
    for raw in paths:
        path = Path(raw)
        log = read_metrics_csv(path)
        label = run_label(path)
        rounds = max((r.round for r in log.global_records()), default=0)
        runs.append(RunSummary(label, path, best_epoch_summary(log), rounds))
        logs.append((label, log))
    report = Report(runs)
    if charts_dir is not None:
        report.charts = write_charts(logs, Path(charts_dir))
    log_event(logger, "report_written", runs=len(runs), charts=[str(p) for p in report.charts])
    return report
