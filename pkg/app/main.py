"""Command-line entry point: ``fedsim partition | train | report``."""

import argparse
import json
import logging
import sys
from collections.abc import Sequence

from app.config import settings
from app.errors import SimulatorError
from app.log import configure_logging, log_event
from app.services.experiment_service import cmd_partition, cmd_train
from app.services.flat_config import load_flat_config
from app.services.report_service import cmd_report

logger = logging.getLogger(__name__)


def _config_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", default=None, help="Flat 'key = value' experiment file")
    parent.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override one config key (repeatable)",
    )
    parent.add_argument("--seed", type=int, default=None, help="Experiment seed")
    parent.add_argument("--out", default=None, help="Output directory")
    return parent


def build_parser() -> argparse.ArgumentParser:
    """
    Create the argument parser.

    Returns:
        Parser with the ``partition``, ``train`` and ``report`` subcommands
    """
    parser = argparse.ArgumentParser(
        prog="fedsim",
        description="Desk-scale simulator for federated fine-tuning methods",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    commands = parser.add_subparsers(dest="command", required=True)
    common = _config_options()
    commands.add_parser(
        "partition", parents=[common], help="Write Dirichlet client shards and a manifest"
    )
    commands.add_parser("train", parents=[common], help="Run one experiment")
    report = commands.add_parser("report", help="Summarize metrics.csv files")
    report.add_argument("metrics", nargs="+", help="metrics.csv files")
    report.add_argument("--charts", default=None, help="Directory for SVG line charts")
    return parser


def run(args: argparse.Namespace) -> int:
    """Execute a parsed command and return its exit code."""
    if args.command == "report":
        result = cmd_report(args.metrics, args.charts)
        sys.stdout.write(result.table())
        for chart in result.charts:
            sys.stdout.write(f"{chart}\n")
        return 0
    config = load_flat_config(args.config, args.overrides, seed=args.seed, output_dir=args.out)
    if args.command == "partition":
        sys.stdout.write(f"{cmd_partition(config)}\n")
        return 0
    artifacts = cmd_train(config)
    sys.stdout.write(f"{artifacts.run_dir}\n")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    """
    Parse arguments, run the command and map failures to exit codes.

    Exit codes: 0 success, 2 config or contract error, 3 data error,
    4 numerical error, 5 I/O error, 1 anything else.
    """
    configure_logging(settings)
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except SimulatorError as exc:
        log_event(logger, "command_failed", level=logging.ERROR, command=args.command, **exc.to_dict())
        sys.stderr.write(json.dumps(exc.to_dict(), default=str) + "\n")
        return exc.exit_code
    except Exception:
        logger.exception("Unhandled error in %s", args.command)
        return 1


if __name__ == "__main__":
    sys.exit(main())
