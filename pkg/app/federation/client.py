"""
Simulated client: local shard, private parameters, optimizer and sampler.

A client only ever touches its own state between two aggregation barriers.
"""

from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from app.adapters.lora import (
    LoraPair,
    adapter_params,
    lora_loss_and_grads,
    merged_params,
    update_pairs,
)
from app.data.dataset import LabeledDataset
from app.errors import ContractError, SimulatorError
from app.linalg import spectral_norm
from app.metrics.records import MetricsRecord
from app.model.base import Batch, GradSet, ParamSet
from app.model.network import loss_and_grads
from app.optim.factory import Optimizer
from app.schemas import ModelConfig


def client_rng(seed: int, client_id: int) -> np.random.Generator:
    """Batch-sampling generator of one client."""
    return np.random.default_rng(np.random.SeedSequence([seed, client_id]))


@dataclass
class ClientState:
    """Everything one client owns."""

    client_id: int
    shard: LabeledDataset
    params: ParamSet
    optimizer: Optimizer
    rng: np.random.Generator
    pairs: list[LoraPair] | None = None
    record_gradients: bool = False
    gradient_log: list[GradSet] = field(default_factory=list)
    max_grad_norm: float = 0.0
    _order: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    _cursor: int = 0

    @property
    def train_size(self) -> int:
        return len(self.shard)

    def model_params(self) -> ParamSet:
        """Effective weights (adapters merged in)."""
        if self.pairs is None:
            return self.params
        return merged_params(self.params, self.pairs)

    def next_batch(self, batch_size: int) -> Batch:
        """Next mini-batch from a reshuffled pass over the shard."""
        picked: list[int] = []
        while len(picked) < batch_size:
            if self._cursor >= self._order.size:
                self._order = self.rng.permutation(self.train_size)
                self._cursor = 0
            take = min(batch_size - len(picked), self._order.size - self._cursor)
            picked.extend(int(i) for i in self._order[self._cursor : self._cursor + take])
            self._cursor += take
        return self.shard.batch(picked)

    def receive(
        self,
        params: ParamSet,
        pairs: list[LoraPair] | None,
        new_optimizer: Callable[[], Optimizer] | None = None,
    ) -> None:
        """
        Adopt broadcast global weights (and adapters).

        Raises:
            ContractError: if the global set is not congruent with the client's
                or adapts different targets
        """
        self.params.check_congruent(params)
        if (pairs is None) != (self.pairs is None) or (
            pairs is not None
            and self.pairs is not None
            and [p.target for p in pairs] != [p.target for p in self.pairs]
        ):
            raise ContractError("Broadcast adapters do not match the client's targets")
        reshaped = (
            pairs is not None
            and self.pairs is not None
            and any(a.a.shape != b.a.shape for a, b in zip(pairs, self.pairs))
        )
        self.params = params
        self.pairs = list(pairs) if pairs is not None else None
        if reshaped and new_optimizer is not None:
            # moment shapes follow the adapter rank
            self.optimizer = new_optimizer()
        else:
            self.optimizer.on_broadcast()

    def local_step(self, cfg: ModelConfig, batch_size: int) -> tuple[float, float]:
        """
        One optimizer step on a fresh mini-batch.

        Returns:
            (batch loss before the update, spectral norm of the full-weight gradient)
        """
        batch = self.next_batch(batch_size)
        if self.pairs is None:
            value, grads = loss_and_grads(self.params, cfg, batch)
            full = grads
            self.params = self.optimizer.step(self.params, grads)
        else:
            value, grads, full = lora_loss_and_grads(self.params, self.pairs, cfg, batch)
            updated = self.optimizer.step(adapter_params(self.pairs), grads)
            self.pairs = update_pairs(self.pairs, updated)
        norm = max((spectral_norm(g) for g in full.values()), default=0.0)
        self.max_grad_norm = max(self.max_grad_norm, norm)
        if self.record_gradients:
            self.gradient_log.append({name: g.copy() for name, g in full.items()})
        return value, norm

    def run_window(
        self, cfg: ModelConfig, batch_size: int, epoch: int, round_index: int, first_step: int, steps: int
    ) -> list[MetricsRecord]:
        """
        Run ``steps`` local steps and return one record per step.

        Raises:
            SimulatorError: any failure, annotated with epoch, round, step and client id
        """
        records = []
        for step in range(first_step, first_step + steps):
            try:
                value, norm = self.local_step(cfg, batch_size)
            except SimulatorError as exc:
                raise exc.with_context(
                    epoch=epoch, round=round_index, step=step, client_id=self.client_id
                )
            records.append(
                MetricsRecord(
                    epoch=epoch,
                    round=round_index,
                    local_step=step,
                    client_id=str(self.client_id),
                    loss=value,
                    grad_spectral_norm=norm,
                )
            )
        return records


def broadcast(
    params: ParamSet,
    pairs: Sequence[LoraPair] | None,
    clients: Iterable[ClientState],
    new_optimizer: Callable[[], Optimizer] | None = None,
) -> None:
    """Replace every client's model with the global one."""
    for client in clients:
        client.receive(params, list(pairs) if pairs is not None else None, new_optimizer)
