"""Command services: config files, model files, experiments and reports."""

from app.services.experiment_service import RunArtifacts, cmd_partition, cmd_train, prepare_data
from app.services.flat_config import dump_flat_config, load_flat_config, parse_flat_config
from app.services.report_service import Report, cmd_report
from app.services.serialization import read_model, write_model

__all__ = [
    "Report",
    "RunArtifacts",
    "cmd_partition",
    "cmd_report",
    "cmd_train",
    "dump_flat_config",
    "load_flat_config",
    "parse_flat_config",
    "prepare_data",
    "read_model",
    "write_model",
]
