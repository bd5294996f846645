"""Tests for the partition and train commands."""

import json

import numpy as np
import pytest

from app.data import read_partition
from app.errors import ConfigError
from app.metrics import read_metrics_csv
from app.services.experiment_service import (
    CONFIG_FILE,
    MANIFEST_FILE,
    METRICS_FILE,
    MODEL_FILE,
    SUMMARY_FILE,
    client_shards,
    cmd_partition,
    cmd_train,
    load_dataset,
    prepare_data,
)
from app.services.flat_config import load_flat_config
from app.services.serialization import read_model


def _in(tmp_path, name, config):
    return config.model_copy(update={"output_dir": str(tmp_path / name)})


class TestTrain:
    """Run directories."""

    def test_writes_run_directory(self, tmp_path, make_config):
        """A run writes its five files and the metrics match the in-memory log."""
        config = _in(tmp_path, "run", make_config("direct_sgd"))

        artifacts = cmd_train(config)

        for name in (CONFIG_FILE, MANIFEST_FILE, METRICS_FILE, MODEL_FILE, SUMMARY_FILE):
            assert (artifacts.run_dir / name).is_file()
        assert read_metrics_csv(artifacts.metrics) == artifacts.result.log
        assert load_flat_config(artifacts.config) == config

    def test_outputs_are_reproducible(self, tmp_path, make_config):
        """Two runs of one config write byte-identical files."""
        config = make_config("fedftg")

        first = cmd_train(_in(tmp_path, "a", config))
        second = cmd_train(_in(tmp_path, "b", config))

        for name in (MANIFEST_FILE, METRICS_FILE, MODEL_FILE, SUMMARY_FILE):
            assert (first.run_dir / name).read_bytes() == (second.run_dir / name).read_bytes()

    def test_manifest(self, tmp_path, make_config):
        """The manifest records shard sizes, histograms and the schedule."""
        artifacts = cmd_train(_in(tmp_path, "run", make_config("fedit")))

        manifest = json.loads(artifacts.manifest.read_text())

        assert [c["id"] for c in manifest["clients"]] == [0, 1]
        for client in manifest["clients"]:
            assert sum(client["class_histogram"]) == client["size"]
        assert manifest["rounds"] == 6
        assert manifest["steps_per_epoch"] == 10

    def test_summary_for_direct_sgd(self, tmp_path, make_config):
        """Direct SGD runs report the norm-growth audit and convex oracle norm."""
        artifacts = cmd_train(_in(tmp_path, "run", make_config("direct_sgd")))

        summary = json.loads(artifacts.summary.read_text())

        assert summary["norm_bound_holds"] is True
        assert summary["communication_cost"] == 24
        assert summary["w_star_norm"] > 0
        assert summary["generalization_bounds"]["matrix"] == "W"
        assert summary["best_epoch"]["epoch"] in (1, 2)

    def test_model_file_holds_adapters(self, tmp_path, make_config):
        """LoRA runs store the merged weights followed by the adapter factors."""
        artifacts = cmd_train(_in(tmp_path, "run", make_config("fedit")))

        model = read_model(artifacts.model)

        assert model.names == ["W", "W.lora_B", "W.lora_A"]
        np.testing.assert_array_equal(model["W"], artifacts.result.params["W"])


class TestData:
    """Data sources and partition files."""

    def test_partition_then_train_from_shards(self, tmp_path, make_config):
        """Shards written by partition load back as the same client shards."""
        config = _in(tmp_path, "shards", make_config("direct_sgd"))

        manifest_path = cmd_partition(config)
        from_files = make_config(
            "direct_sgd", **{"data.source": "shards", "data.shards_dir": str(manifest_path.parent)}
        )

        assert manifest_path.name == MANIFEST_FILE
        for written, generated in zip(client_shards(from_files), client_shards(config)):
            np.testing.assert_array_equal(written.inputs, generated.inputs)
            np.testing.assert_array_equal(written.labels, generated.labels)
        shards, manifest = read_partition(manifest_path.parent)
        assert len(shards) == 2
        assert manifest["seed"] == 0

    def test_shard_count_must_match(self, tmp_path, make_config):
        """A partition directory with another client count is rejected."""
        cmd_partition(_in(tmp_path, "shards", make_config("direct_sgd")))
        config = make_config(
            "direct_sgd",
            **{
                "data.source": "shards",
                "data.shards_dir": str(tmp_path / "shards"),
                "partition.num_clients": "3",
            },
        )

        with pytest.raises(ConfigError):
            client_shards(config)

    def test_shards_source_cannot_be_partitioned(self, tmp_path, make_config):
        """Already-partitioned data has no whole dataset."""
        config = make_config("direct_sgd", **{"data.source": "shards", "data.shards_dir": str(tmp_path)})

        with pytest.raises(ConfigError):
            load_dataset(config)
        with pytest.raises(ConfigError):
            cmd_partition(config)

    def test_prepare_data_splits_every_shard(self, make_config):
        """Held-out rows of every client pool into one evaluation set."""
        config = make_config("direct_sgd")

        train, eval_set = prepare_data(config)
        raw = client_shards(config)

        assert sum(len(s) for s in train) + len(eval_set) == sum(len(s) for s in raw)
        assert len(eval_set) > 0
