"""Tests for metric rows, their CSV form and best-epoch summaries."""

import pytest

from app.errors import DataError, StorageError
from app.metrics import (
    COLUMNS,
    GLOBAL_CLIENT,
    MetricsLog,
    MetricsRecord,
    best_epoch_summary,
    read_metrics_csv,
)


def _end(epoch: int, round_: int, f1: float | None, **extra) -> MetricsRecord:
    return MetricsRecord(epoch=epoch, round=round_, local_step=0, client_id=GLOBAL_CLIENT, macro_f1=f1, **extra)


@pytest.fixture
def log() -> MetricsLog:
    """Two clients and two aggregations."""
    return MetricsLog(
        [
            MetricsRecord(epoch=0, round=0, local_step=1, client_id="0", loss=0.1 + 0.2),
            MetricsRecord(epoch=0, round=0, local_step=1, client_id="1", loss=1e-300),
            _end(0, 1, 0.5, eval_loss=0.75, accuracy=0.6, agg_update_rank=3, svd_tail_mass=0.0),
            _end(1, 2, 0.7, eval_loss=0.5, accuracy=0.8, entropy_Wup=12.25, bound_direct=1 / 3),
        ]
    )


class TestMetricsCsv:
    """metrics.csv rendering and parsing."""

    def test_header(self, log):
        """The header lists every column in record order."""
        assert log.to_csv_text().splitlines()[0] == ",".join(COLUMNS)
        assert COLUMNS[:4] == ["epoch", "round", "local_step", "client_id"]

    def test_client_id_with_separator_round_trips(self, tmp_path):
        """Cells holding commas or quotes are quoted and read back unchanged."""
        log = MetricsLog([MetricsRecord(epoch=1, round=1, local_step=1, client_id='site "a", 2', loss=0.5)])
        path = tmp_path / "metrics.csv"

        log.write_csv(path)

        assert read_metrics_csv(path) == log
        assert '"site ""a"", 2"' in path.read_text()

    def test_round_trip_is_exact(self, log, tmp_path):
        """Values read back equal the logged ones, absent cells included."""
        path = tmp_path / "metrics.csv"

        log.write_csv(path)
        back = read_metrics_csv(path)

        assert back == log
        assert back.records[1].loss == 1e-300
        assert back.records[0].eval_loss is None

    def test_absent_values_are_empty_cells(self, log):
        """None renders as an empty cell."""
        row = log.to_csv_text().splitlines()[1].split(",")

        assert row[COLUMNS.index("eval_loss")] == ""

    def test_missing_column(self, tmp_path):
        """A file without a required column names it."""
        path = tmp_path / "metrics.csv"
        path.write_text(",".join(c for c in COLUMNS if c != "macro_f1") + "\n")

        with pytest.raises(DataError, match="Missing column 'macro_f1'"):
            read_metrics_csv(path)

    def test_malformed_cell(self, tmp_path, log):
        """A non-numeric cell names its line."""
        path = tmp_path / "metrics.csv"
        text = log.to_csv_text().replace("0.75", "abc")
        path.write_text(text)

        with pytest.raises(DataError) as exc_info:
            read_metrics_csv(path)

        assert exc_info.value.details["row"] == 4

    def test_missing_file(self, tmp_path):
        """An unreadable file is a storage error."""
        with pytest.raises(StorageError):
            read_metrics_csv(tmp_path / "absent.csv")

    def test_global_and_client_views(self, log):
        """Rows split into aggregation and client views."""
        assert [r.round for r in log.global_records()] == [1, 2]
        assert [r.client_id for r in log.client_records()] == ["0", "1"]
        assert len(log.client_records("1")) == 1


class TestBestEpochSummary:
    """Highest macro-F1 epoch."""

    def test_picks_highest(self, log):
        """The epoch with the higher pooled macro-F1 wins."""
        summary = best_epoch_summary(log)

        assert (summary.epoch, summary.round, summary.macro_f1) == (1, 2, 0.7)
        assert summary.eval_loss == 0.5

    def test_ties_go_to_the_earliest_epoch(self):
        """Equal scores keep the first epoch."""
        log = MetricsLog([_end(0, 3, 0.6), _end(1, 6, 0.6), _end(2, 9, 0.4)])

        assert best_epoch_summary(log).epoch == 0

    def test_uses_last_aggregation_of_each_epoch(self):
        """Within an epoch only the final aggregation counts."""
        log = MetricsLog([_end(0, 1, 0.9), _end(0, 2, 0.3), _end(1, 3, 0.5)])

        summary = best_epoch_summary(log)

        assert (summary.epoch, summary.macro_f1) == (1, 0.5)

    def test_requires_scores(self):
        """A log without macro-F1 rows cannot be summarized."""
        with pytest.raises(DataError):
            best_epoch_summary(MetricsLog([_end(0, 1, None)]))
