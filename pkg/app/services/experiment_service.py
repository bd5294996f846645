"""
Experiment service behind the ``partition`` and ``train`` commands.

It resolves the data source of a config, builds client shards and the pooled
evaluation set, runs the federated trainer and writes the run directory:

- ``config.txt``: resolved flat config
- ``manifest.json``: shard sizes and class histograms
- ``metrics.csv``: every client step and aggregation
- ``model.bin``: final global weights (plus adapters for LoRA methods)
- ``summary.json``: best epoch, communication cost and generalization bounds
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from app.adapters.lora import adapter_params
from app.config import Settings, settings as default_settings
from app.data.csv_io import CsvSchema, load_csv, read_partition, write_partition
from app.data.dataset import DatasetKind, LabeledDataset
from app.data.partition import dirichlet_partition, split_train_eval
from app.data.synthetic import synth_sequences, synth_vectors
from app.errors import ConfigError, StorageError
from app.federation.engine import TrainingResult, run_training
from app.linalg import spectral_norm
from app.log import log_event
from app.metrics.audit import norm_bound_audit
from app.metrics.bounds import BoundInputs, generalization_bounds
from app.metrics.records import METRICS_FILE_NAME
from app.metrics.summary import best_epoch_summary
from app.model.base import ParamSet
from app.schemas import DataSource, ExperimentConfig, Method, ModelFamily, OptimizerKind
from app.services.flat_config import write_flat_config
from app.services.serialization import write_model

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.txt"
MANIFEST_FILE = "manifest.json"
METRICS_FILE = METRICS_FILE_NAME
MODEL_FILE = "model.bin"
SUMMARY_FILE = "summary.json"


@dataclass(frozen=True)
class RunArtifacts:
    """Files written by one ``train`` invocation."""

    run_dir: Path
    config: Path
    manifest: Path
    metrics: Path
    model: Path
    summary: Path
    result: TrainingResult


def output_dir(config: ExperimentConfig, settings: Settings | None = None) -> Path:
    """Configured output directory, created if missing."""
    target = Path(config.output_dir or (settings or default_settings).default_output_dir)
    try:
        target.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"Cannot create {target}: {exc}", details={"path": str(target)})
    return target


def _write_json(path: Path, payload: dict[str, Any]) -> None:
    try:
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}", details={"path": str(path)})


def load_dataset(config: ExperimentConfig) -> LabeledDataset:
    """
    Whole dataset of a synthetic or CSV source.

    Raises:
        ConfigError: for the ``shards`` source, which is already partitioned
    """
    model = config.model
    vectors = model.family == ModelFamily.CONVEX
    if config.data.source == DataSource.SYNTHETIC:
        if vectors:
            return synth_vectors(
                config.data.n, model.num_classes, model.feature_dim, config.data.cluster_sep, config.seed
            )
        return synth_sequences(
            config.data.n,
            model.num_classes,
            model.vocab_size,
            model.seq_len,
            config.seed,
            purity=config.data.purity,
        )
    if config.data.source == DataSource.CSV:
        schema = CsvSchema(
            DatasetKind.VECTOR if vectors else DatasetKind.SEQUENCE,
            model.feature_dim if vectors else model.seq_len,
            model.num_classes,
        )
        return load_csv(config.data.csv_path or "", schema)
    raise ConfigError("data.source = shards has no unpartitioned dataset")


def client_shards(config: ExperimentConfig) -> list[LabeledDataset]:
    """Client shards before the train/eval split."""
    if config.data.source != DataSource.SHARDS:
        return dirichlet_partition(load_dataset(config), config.partition)
    shards, _ = read_partition(config.data.shards_dir or "")
    if len(shards) != config.partition.num_clients:
        raise ConfigError(
            f"partition.num_clients = {config.partition.num_clients} but "
            f"{config.data.shards_dir} holds {len(shards)} shards",
            details={"expected": config.partition.num_clients, "found": len(shards)},
        )
    return shards


def prepare_data(config: ExperimentConfig) -> tuple[list[LabeledDataset], LabeledDataset]:
    """Training shard per client plus the pooled evaluation set."""
    return split_train_eval(client_shards(config), config.eval_fraction, seed=config.seed)


def cmd_partition(config: ExperimentConfig, settings: Settings | None = None) -> Path:
    """
    Write shard CSVs and ``manifest.json`` into the output directory.

    Returns:
        Path of the manifest
    """
    if config.data.source == DataSource.SHARDS:
        raise ConfigError("partition needs data.source = synthetic or csv")
    shards = dirichlet_partition(load_dataset(config), config.partition)
    out = output_dir(config, settings)
    write_partition(
        shards,
        out,
        extra={"partition": config.partition.model_dump(mode="json"), "seed": config.seed},
    )
    log_event(logger, "partition_written", out_dir=str(out), shards=len(shards))
    return out / MANIFEST_FILE


def bound_target(config: ExperimentConfig, result: TrainingResult) -> str:
    """Weight matrix whose generalization bounds are reported."""
    if config.model.family == ModelFamily.CONVEX:
        return "W"
    if config.uses_adapters:
        return config.adapter_targets[0]
    trainable = result.base_params.trainable_names
    return "Wup" if "Wup" in trainable else trainable[0]


def run_bounds(config: ExperimentConfig, result: TrainingResult) -> dict[str, Any]:
    """Generalization bounds of the final client weights of one matrix."""
    target = bound_target(config, result)
    d, k = result.params[target].shape
    if config.uses_adapters:
        rank = min(config.adapter.rank, d, k)
    elif config.resolved_optimizer_kind == OptimizerKind.GALORE:
        rank = min(config.optimizer.galore_rank, d, k)
    else:
        rank = min(d, k)
    sizes = [c.train_size for c in result.clients]
    inputs = BoundInputs(
        sigma=config.bounds.sigma,
        n=max(1, sum(sizes) // len(sizes)),
        q=config.bounds.q_bits,
        d=d,
        k=k,
        r=rank,
    )
    bounds = generalization_bounds(inputs, [c.model_params()[target] for c in result.clients])
    return {"matrix": target, "rank": rank, **bounds.to_dict()}


def _manifest(
    config: ExperimentConfig, shards: list[LabeledDataset], eval_set: LabeledDataset, result: TrainingResult
) -> dict[str, Any]:
    return {
        "method": config.method.value,
        "family": config.model.family.value,
        "seed": config.seed,
        "clients": [
            {"id": i, "size": len(s), "class_histogram": s.class_histogram()}
            for i, s in enumerate(shards)
        ],
        "eval": {"size": len(eval_set), "class_histogram": eval_set.class_histogram()},
        "rounds": result.rounds,
        "steps_per_epoch": result.steps_per_epoch,
        "files": [CONFIG_FILE, METRICS_FILE, MODEL_FILE, SUMMARY_FILE],
    }


def _summary(config: ExperimentConfig, result: TrainingResult) -> dict[str, Any]:
    summary: dict[str, Any] = {
        "best_epoch": best_epoch_summary(result.log).to_dict(),
        "communication_cost": result.communication_cost,
        "rounds": result.rounds,
        "initial_weight_norm": result.initial_weight_norm,
        "max_grad_norm": result.max_grad_norm,
        "generalization_bounds": run_bounds(config, result),
    }
    if result.w_star is not None:
        summary["w_star_norm"] = spectral_norm(result.w_star["W"])
    if config.method == Method.DIRECT_SGD:
        checks = norm_bound_audit(
            result.log,
            config.optimizer.lr,
            result.initial_weight_norm,
            config.schedule.local_steps_per_round,
        )
        summary["norm_bound_holds"] = all(checks)
    return summary


def final_model(result: TrainingResult) -> ParamSet:
    """Merged global weights followed by the global adapters, if any."""
    if not result.pairs:
        return result.params
    adapters = adapter_params(result.pairs)
    return ParamSet(result.params.entries + adapters.entries)


def cmd_train(config: ExperimentConfig, settings: Settings | None = None) -> RunArtifacts:
    """
    Run one experiment and write its run directory.

    Raises:
        SimulatorError: any module failure, with epoch/round/step context
    """
    shards, eval_set = prepare_data(config)
    result = run_training(config, shards, eval_set, settings)
    out = output_dir(config, settings)
    artifacts = RunArtifacts(
        run_dir=out,
        config=out / CONFIG_FILE,
        manifest=out / MANIFEST_FILE,
        metrics=out / METRICS_FILE,
        model=out / MODEL_FILE,
        summary=out / SUMMARY_FILE,
        result=result,
    )
    write_flat_config(config, artifacts.config)
    _write_json(artifacts.manifest, _manifest(config, shards, eval_set, result))
    result.log.write_csv(artifacts.metrics)
    write_model(final_model(result), artifacts.model)
    _write_json(artifacts.summary, _summary(config, result))
    log_event(logger, "run_written", run_dir=str(out), rounds=result.rounds, records=len(result.log))
    return artifacts
