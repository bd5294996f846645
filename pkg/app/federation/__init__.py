"""Simulated clients, aggregation rules and the round engine."""

from app.federation.aggregators import (
    AggregationResult,
    aggregate_direct,
    aggregate_fedit,
    aggregate_ffalora,
    aggregate_flexlora,
    client_weights,
    weighted_mean,
)
from app.federation.client import ClientState, broadcast, client_rng
from app.federation.engine import (
    FederatedTrainer,
    TrainingResult,
    run_centralized,
    run_training,
    steps_per_epoch,
)

__all__ = [
    "AggregationResult",
    "ClientState",
    "FederatedTrainer",
    "TrainingResult",
    "aggregate_direct",
    "aggregate_fedit",
    "aggregate_ffalora",
    "aggregate_flexlora",
    "broadcast",
    "client_rng",
    "client_weights",
    "run_centralized",
    "run_training",
    "steps_per_epoch",
    "weighted_mean",
]
