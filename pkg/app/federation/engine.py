"""
Round engine for federated fine-tuning.

Each epoch runs T mini-batch steps per client, cut into windows of
``local_steps_per_round`` steps. Every window ends at a barrier: the server
aggregates with the configured strategy, logs one global record and
broadcasts the new global model. A shorter last window closes each epoch.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import anyio
import numpy as np
from anyio import to_thread

from app.adapters.lora import (
    LoraPair,
    attach_lora,
    lora_scale,
    merged_params,
    trainable_parameter_count,
)
from app.config import Settings, settings as default_settings
from app.data.dataset import LabeledDataset
from app.errors import ContractError, DataError, SimulatorError
from app.federation.aggregators import (
    AggregationResult,
    aggregate_direct,
    aggregate_fedit,
    aggregate_ffalora,
    aggregate_flexlora,
)
from app.federation.client import ClientState, broadcast, client_rng
from app.linalg import row_softmax_entropy, spectral_norm
from app.log import log_event
from app.metrics.audit import rank_trace
from app.metrics.bounds import BoundInputs, bound_direct, bound_ffalora
from app.metrics.classification import accuracy, macro_f1
from app.metrics.oracle import compute_w_star, excess_risk
from app.metrics.records import GLOBAL_CLIENT, MetricsLog, MetricsRecord
from app.model.base import ParamSet
from app.model.network import init_params, loss, predict, select_trainable
from app.optim.factory import Optimizer, build_optimizer
from app.schemas import AdamConfig, AggregationKind, ExperimentConfig, Method, ModelFamily

logger = logging.getLogger(__name__)

ADAPTER_STREAM = 7919


@dataclass
class TrainingResult:
    """Outcome of a run."""

    log: MetricsLog
    params: ParamSet
    base_params: ParamSet
    pairs: list[LoraPair] | None
    clients: list[ClientState]
    w_star: ParamSet | None
    initial_weight_norm: float
    max_grad_norm: float
    rounds: int
    steps_per_epoch: int
    communication_cost: int


def adapter_rng(seed: int, owner: int) -> np.random.Generator:
    """Generator for adapter initialization (owner 0 is the server)."""
    return np.random.default_rng(np.random.SeedSequence([seed, ADAPTER_STREAM, owner]))


def steps_per_epoch(config: ExperimentConfig, shard_sizes: Sequence[int]) -> int:
    """Configured T, or enough steps for one pass over the smallest shard."""
    if config.schedule.steps_per_epoch is not None:
        return config.schedule.steps_per_epoch
    return max(1, math.ceil(min(shard_sizes) / config.schedule.batch_size))


def _first_leaf(group: BaseExceptionGroup) -> BaseException:  # type: ignore[type-arg]
    exc: BaseException = group
    while isinstance(exc, BaseExceptionGroup):
        exc = exc.exceptions[0]
    return exc


class FederatedTrainer:
    """
    Runs one experiment over pre-split client shards.

    Args:
        config: resolved experiment configuration
        shards: training shard per client, in client-id order
        eval_set: pooled global evaluation set
        settings: process settings (worker count)
        record_gradients: keep every full-weight gradient on the clients
        centralized: single model without aggregation or broadcast
    """

    def __init__(
        self,
        config: ExperimentConfig,
        shards: Sequence[LabeledDataset],
        eval_set: LabeledDataset,
        settings: Settings | None = None,
        record_gradients: bool = False,
        centralized: bool = False,
    ) -> None:
        self.config = config
        self.model_cfg = config.model
        self.settings = settings or default_settings
        self.centralized = centralized
        expected = 1 if centralized else config.partition.num_clients
        if len(shards) != expected:
            raise ContractError(f"Expected {expected} shards, got {len(shards)}")
        for client_id, shard in enumerate(shards):
            if len(shard) == 0:
                raise DataError(f"Client {client_id} has an empty training shard")
        if len(eval_set) == 0:
            raise DataError("Global evaluation set is empty")
        self.shards = list(shards)
        self.eval_set = eval_set
        self.pooled_train = LabeledDataset.concat(self.shards)
        self.strategy = config.aggregation_strategy()
        self.steps_per_epoch = steps_per_epoch(config, [len(s) for s in self.shards])
        self.record_gradients = record_gradients
        self.max_workers = config.federation.max_workers or self.settings.max_workers
        self._order_rng = (
            np.random.default_rng(config.federation.shuffle_seed)
            if config.federation.shuffle_seed is not None
            else None
        )

    # setup

    def new_optimizer(self) -> Optimizer:
        opt = self.config.optimizer
        return build_optimizer(
            self.config.resolved_optimizer_kind,
            lr=opt.lr,
            adam=AdamConfig(lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps),
            galore=self.config.galore_config(),
            reset_on_broadcast=opt.reset_on_broadcast,
        )

    def _initial_model(self) -> tuple[ParamSet, list[list[LoraPair]] | None]:
        cfg = self.config
        base = init_params(self.model_cfg, cfg.seed)
        if not cfg.uses_adapters:
            return select_trainable(base, cfg.resolved_selection), None
        base = base.with_trainable([])
        scale = lora_scale(cfg.adapter.lora_alpha, cfg.adapter.rank, cfg.adapter.convention)
        owners = range(1, len(self.shards) + 1)
        if cfg.adapter.shared_init:
            owners = range(0, 1)
        per_owner = []
        for owner in owners:
            _, pairs = attach_lora(
                base,
                cfg.adapter_targets,
                cfg.adapter.rank,
                scale,
                cfg.adapter.std,
                cfg.frozen_a,
                adapter_rng(cfg.seed, owner),
            )
            per_owner.append(pairs)
        if cfg.adapter.shared_init:
            per_owner = per_owner * len(self.shards)
        return base, per_owner

    def _target_names(self, base: ParamSet) -> list[str]:
        if self.config.uses_adapters:
            return list(self.config.adapter_targets)
        return base.trainable_names

    # execution

    def _run_clients(
        self, clients: list[ClientState], epoch: int, round_index: int, first_step: int, steps: int
    ) -> list[MetricsRecord]:
        order = list(range(len(clients)))
        if self._order_rng is not None:
            order = [int(i) for i in self._order_rng.permutation(len(clients))]
        ordered = [clients[i] for i in order]
        batch_size = self.config.schedule.batch_size

        def work(client: ClientState) -> list[MetricsRecord]:
            return client.run_window(self.model_cfg, batch_size, epoch, round_index, first_step, steps)

        if self.config.federation.parallel and len(ordered) > 1:
            try:
                results = anyio.run(self._run_parallel, ordered, work)
            except BaseExceptionGroup as group:
                raise _first_leaf(group)
        else:
            results = {c.client_id: work(c) for c in ordered}
        records: list[MetricsRecord] = []
        for client_id in sorted(results):
            records.extend(results[client_id])
        return records

    async def _run_parallel(
        self, clients: list[ClientState], work: Callable[[ClientState], list[MetricsRecord]]
    ) -> dict[int, list[MetricsRecord]]:
        results: dict[int, list[MetricsRecord]] = {}
        limiter = anyio.CapacityLimiter(self.max_workers)

        async def run_one(client: ClientState) -> None:
            results[client.client_id] = await to_thread.run_sync(work, client, limiter=limiter)

        async with anyio.create_task_group() as tg:
            for client in clients:
                tg.start_soon(run_one, client)
        return results

    def _aggregate(self, clients: list[ClientState], reference: ParamSet) -> AggregationResult:
        sizes = [c.train_size for c in clients]
        kind = self.strategy.kind
        weighting = self.strategy.weighting
        if kind == AggregationKind.DIRECT:
            return aggregate_direct([c.params for c in clients], weighting, sizes, reference)
        pairs = [c.pairs or [] for c in clients]
        if kind == AggregationKind.FEDIT:
            return aggregate_fedit(pairs, weighting, sizes)
        if kind == AggregationKind.FLEXLORA:
            return aggregate_flexlora(
                pairs, weighting, self.strategy.r_target, sizes, self.strategy.factorization
            )
        return aggregate_ffalora(pairs, weighting, sizes)

    # evaluation

    def _global_record(
        self,
        epoch: int,
        round_index: int,
        step: int,
        model: ParamSet,
        targets: list[str],
        result: AggregationResult | None,
        max_grad: float,
        bound_consts: dict[str, float],
        w_star: ParamSet | None,
    ) -> MetricsRecord:
        cfg = self.model_cfg
        train_batch = self.pooled_train.batch()
        train_loss = loss(model, cfg, train_batch)
        eval_batch = self.eval_set.batch()
        eval_loss = loss(model, cfg, eval_batch)
        preds = predict(model, cfg, self.eval_set.inputs)
        record: dict[str, object] = {
            "epoch": epoch,
            "round": round_index,
            "local_step": step,
            "client_id": GLOBAL_CLIENT,
            "loss": train_loss,
            "eval_loss": eval_loss,
            "accuracy": accuracy(preds, self.eval_set.labels),
            "macro_f1": macro_f1(preds, self.eval_set.labels, cfg.num_classes),
            "grad_spectral_norm": max_grad,
            "weight_spectral_norm": max(spectral_norm(model[n]) for n in targets),
        }
        if result is not None and result.updates:
            record["agg_update_rank"] = max(rank_trace(u) for u in result.updates.values())
        if result is not None and result.tail_mass:
            record["svd_tail_mass"] = max(result.tail_mass.values())
        if cfg.family == ModelFamily.TRANSFORMER:
            record["entropy_Wup"] = row_softmax_entropy(model["Wup"])
        if w_star is not None:
            record["excess_risk"] = excess_risk(model, w_star, cfg, train_batch)
            inputs = BoundInputs(
                D=max_grad,
                N=len(self.shards),
                S=round_index,
                t_agg=self.config.schedule.local_steps_per_round,
                c=max_grad * bound_consts["w0_distance"],
                alpha=self.config.optimizer.lr,
            )
            record["bound_direct"] = bound_direct(inputs)
            if "a_gram" in bound_consts:
                ffa = BoundInputs(
                    D=max_grad,
                    N=len(self.shards),
                    S=round_index,
                    t_agg=self.config.schedule.local_steps_per_round,
                    c=bound_consts["a_gram"],
                    alpha=self.config.optimizer.lr,
                    w_star_norm=bound_consts["w0_distance"],
                )
                record["bound_ffalora"] = bound_ffalora(ffa)
        return MetricsRecord(**record)  # type: ignore[arg-type]

    # main loop

    def run(self) -> TrainingResult:
        """
        Execute every epoch and return the metric log and final model.

        Raises:
            SimulatorError: any module failure, annotated with epoch/round/step context
        """
        cfg = self.config
        base, client_pairs = self._initial_model()
        targets = self._target_names(base)
        clients = [
            ClientState(
                client_id=i,
                shard=shard,
                params=base,
                optimizer=self.new_optimizer(),
                rng=client_rng(cfg.resolved_seed, i),
                pairs=client_pairs[i] if client_pairs is not None else None,
                record_gradients=self.record_gradients,
            )
            for i, shard in enumerate(self.shards)
        ]
        global_params = base
        global_pairs = client_pairs[0] if client_pairs is not None else None
        initial_model = merged_params(base, global_pairs) if global_pairs else base
        initial_weight_norm = max(spectral_norm(initial_model[n]) for n in targets)

        w_star: ParamSet | None = None
        bound_consts: dict[str, float] = {}
        if self.model_cfg.family == ModelFamily.CONVEX:
            pooled = self.pooled_train.batch()
            w_star = compute_w_star(pooled, self.model_cfg)
            bound_consts["w0_distance"] = spectral_norm(initial_model["W"] - w_star["W"])
            if cfg.method == Method.FFALORA and global_pairs:
                a0 = global_pairs[0].a
                bound_consts["a_gram"] = spectral_norm(a0.T @ a0)

        log = MetricsLog()
        log_event(
            logger,
            "run_started",
            method=cfg.method.value,
            family=self.model_cfg.family.value,
            clients=len(clients),
            epochs=cfg.schedule.epochs,
            steps_per_epoch=self.steps_per_epoch,
            t_agg=cfg.schedule.local_steps_per_round,
            centralized=self.centralized,
        )
        t_agg = cfg.schedule.local_steps_per_round
        round_index = 0
        model = initial_model
        for epoch in range(1, cfg.schedule.epochs + 1):
            step = 0
            while step < self.steps_per_epoch:
                window = min(t_agg, self.steps_per_epoch - step)
                round_index += 1
                log.extend(self._run_clients(clients, epoch, round_index, step + 1, window))
                step += window
                try:
                    if self.centralized:
                        result = None
                        global_params = clients[0].params
                        global_pairs = clients[0].pairs
                    else:
                        result = self._aggregate(clients, global_params)
                        if result.params is not None:
                            global_params = result.params
                        global_pairs = result.pairs if result.pairs is not None else global_pairs
                        broadcast(global_params, global_pairs, clients, self.new_optimizer)
                    model = merged_params(global_params, global_pairs) if global_pairs else global_params
                    max_grad = max(c.max_grad_norm for c in clients)
                    record = self._global_record(
                        epoch, round_index, step, model, targets, result, max_grad, bound_consts, w_star
                    )
                except SimulatorError as exc:
                    raise exc.with_context(epoch=epoch, round=round_index, step=step)
                log.append(record)
                log_event(
                    logger,
                    "round_completed",
                    level=logging.DEBUG,
                    epoch=epoch,
                    round=round_index,
                    step=step,
                    loss=record.loss,
                    agg_update_rank=record.agg_update_rank,
                )
            log_event(
                logger,
                "epoch_completed",
                epoch=epoch,
                round=round_index,
                eval_loss=record.eval_loss,
                macro_f1=record.macro_f1,
            )

        max_grad = max(c.max_grad_norm for c in clients)
        cost = trainable_parameter_count(clients[0].params, clients[0].pairs)
        log_event(logger, "run_completed", rounds=round_index, records=len(log), max_grad_norm=max_grad)
        return TrainingResult(
            log=log,
            params=model,
            base_params=global_params,
            pairs=global_pairs,
            clients=clients,
            w_star=w_star,
            initial_weight_norm=initial_weight_norm,
            max_grad_norm=max_grad,
            rounds=round_index,
            steps_per_epoch=self.steps_per_epoch,
            communication_cost=cost,
        )


def run_training(
    config: ExperimentConfig,
    shards: Sequence[LabeledDataset],
    eval_set: LabeledDataset,
    settings: Settings | None = None,
) -> TrainingResult:
    """Federated run over pre-split shards."""
    return FederatedTrainer(config, shards, eval_set, settings).run()


def run_centralized(
    config: ExperimentConfig, dataset: LabeledDataset, eval_set: LabeledDataset
) -> TrainingResult:
    """Single-model reference run sharing the client step code."""
    return FederatedTrainer(config, [dataset], eval_set, centralized=True).run()

