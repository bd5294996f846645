"""Pytest configuration and fixtures."""

from collections.abc import Callable

import numpy as np
import pytest

from app.model.base import Batch
from app.schemas import ExperimentConfig, ModelConfig, ModelFamily
from app.services.flat_config import build_config

CONVEX_BASE = {
    "model.family": "convex",
    "model.num_classes": "4",
    "model.feature_dim": "6",
    "model.l2_lambda": "0.01",
    "data.n": "320",
    "data.cluster_sep": "4.0",
    "partition.num_clients": "2",
    "partition.alpha": "0.5",
    "eval_fraction": "0.1",
    "schedule.epochs": "2",
    "schedule.local_steps_per_round": "4",
    "schedule.steps_per_epoch": "10",
    "optimizer.lr": "0.05",
    "adapter.rank": "2",
    "adapter.lora_alpha": "4",
    "optimizer.galore_rank": "2",
}

TRANSFORMER_BASE = {
    "model.family": "transformer",
    "model.num_classes": "4",
    "model.vocab_size": "16",
    "model.hidden_dim": "8",
    "model.mlp_mult": "2",
    "model.seq_len": "6",
    "data.n": "200",
    "partition.num_clients": "2",
    "partition.alpha": "0.5",
    "eval_fraction": "0.1",
    "schedule.epochs": "2",
    "schedule.local_steps_per_round": "4",
    "schedule.steps_per_epoch": "8",
    "optimizer.lr": "0.01",
    "adapter.rank": "2",
    "adapter.lora_alpha": "4",
    "optimizer.galore_rank": "2",
}


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for test inputs."""
    return np.random.default_rng(12345)


@pytest.fixture
def convex_cfg() -> ModelConfig:
    """Small convex classifier."""
    return ModelConfig(family=ModelFamily.CONVEX, num_classes=3, feature_dim=4, l2_lambda=0.01)


@pytest.fixture
def transformer_cfg() -> ModelConfig:
    """Small single-block transformer."""
    return ModelConfig(
        family=ModelFamily.TRANSFORMER,
        num_classes=3,
        vocab_size=10,
        hidden_dim=4,
        mlp_mult=2,
        seq_len=5,
    )


@pytest.fixture
def vector_batch(convex_cfg: ModelConfig, rng: np.random.Generator) -> Batch:
    """Random feature rows covering every class."""
    labels = np.array([0, 1, 2, 0, 1, 2], dtype=np.int64)
    return Batch(rng.normal(size=(6, convex_cfg.feature_dim)), labels)


@pytest.fixture
def sequence_batch(transformer_cfg: ModelConfig, rng: np.random.Generator) -> Batch:
    """Random token sequences covering every class."""
    tokens = rng.integers(0, transformer_cfg.vocab_size, size=(4, transformer_cfg.seq_len))
    return Batch(tokens.astype(np.int64), np.array([0, 1, 2, 1], dtype=np.int64))


@pytest.fixture
def make_config() -> Callable[..., ExperimentConfig]:
    """
    Build a small experiment from dotted keys.

    ``make_config("ffalora", family="transformer", **{"optimizer.lr": "0.02"})``
    """

    def build(method: str = "direct_sgd", family: str = "convex", **pairs: str) -> ExperimentConfig:
        base = dict(CONVEX_BASE if family == "convex" else TRANSFORMER_BASE)
        base["method"] = method
        base.update(pairs)
        return build_config(base)

    return build
