"""
Dirichlet non-IID partitioning and per-shard train/eval splitting.
"""

import logging

import numpy as np
import numpy.typing as npt

from app.data.dataset import LabeledDataset
from app.errors import ContractError
from app.log import log_event
from app.schemas import PartitionSpec

logger = logging.getLogger(__name__)


def largest_remainder(shares: npt.NDArray[np.float64], total: int) -> npt.NDArray[np.int64]:
    """Integer counts summing to ``total`` proportional to ``shares`` (ties to the lower index)."""
    raw = shares / shares.sum() * total
    counts = np.floor(raw).astype(np.int64)
    missing = total - int(counts.sum())
    if missing > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:missing]] += 1
    return counts


def _dirichlet(rng: np.random.Generator, alpha: float, n: int) -> npt.NDArray[np.float64]:
    p = rng.dirichlet(np.full(n, alpha))
    if not np.all(np.isfinite(p)) or p.sum() <= 0:
        # every gamma draw underflowed; the limit puts all mass on one client
        p = np.zeros(n)
        p[rng.integers(n)] = 1.0
    return p


def _rebalance(
    shards: list[list[int]], labels: npt.NDArray[np.int64], num_classes: int, rng: np.random.Generator
) -> None:
    total = sum(len(s) for s in shards)
    n = len(shards)
    targets = [total // n + (1 if i < total % n else 0) for i in range(n)]
    moves = 0
    while True:
        surplus = [len(s) - t for s, t in zip(shards, targets)]
        donor = int(np.argmax(surplus))
        if surplus[donor] <= 0:
            break
        receiver = int(np.argmin(surplus))
        donor_labels = labels[shards[donor]]
        counts = np.bincount(donor_labels, minlength=num_classes)
        tied = np.flatnonzero(counts == counts.max())
        cls = int(tied[rng.integers(len(tied))]) if len(tied) > 1 else int(tied[0])
        positions = np.flatnonzero(donor_labels == cls)
        pos = int(positions[rng.integers(len(positions))])
        shards[receiver].append(shards[donor].pop(pos))
        moves += 1
    log_event(logger, "partition_rebalanced", level=logging.DEBUG, moves=moves)


def dirichlet_partition(ds: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    """
    Split ``ds`` into ``spec.num_clients`` label-skewed shards.

    Each class is shuffled and dealt to clients in proportions drawn from
    Dirichlet(alpha); counts use floor plus largest remainder. With
    ``equal_sizes`` the shards are then levelled to sizes within one sample by
    moving, one at a time, a sample of the donor's most common class from the
    largest surplus to the largest deficit.

    Raises:
        ContractError: if some class has no samples
    """
    rng = np.random.default_rng(spec.seed)
    labels = ds.labels
    shards: list[list[int]] = [[] for _ in range(spec.num_clients)]
    for c in range(ds.num_classes):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            raise ContractError(f"Class {c} has no samples", details={"class": c})
        rng.shuffle(idx)
        counts = largest_remainder(_dirichlet(rng, spec.alpha, spec.num_clients), idx.size)
        start = 0
        for client, count in enumerate(counts):
            shards[client].extend(int(i) for i in idx[start : start + count])
            start += count
    if spec.equal_sizes:
        _rebalance(shards, labels, ds.num_classes, rng)
    parts = [ds.subset(sorted(s)) for s in shards]
    log_event(
        logger,
        "partition_created",
        clients=spec.num_clients,
        alpha=spec.alpha,
        sizes=[len(p) for p in parts],
    )
    return parts


def eval_size(n: int, eval_fraction: float) -> int:
    """Rounded eval count of a shard of ``n`` samples."""
    return int(np.floor(n * eval_fraction + 0.5))


def _stratified_eval(
    labels: npt.NDArray[np.int64], n_eval: int, rng: np.random.Generator
) -> npt.NDArray[np.int64]:
    classes, counts = np.unique(labels, return_counts=True)
    quotas = largest_remainder(counts.astype(np.float64), n_eval)
    quotas = np.minimum(quotas, counts - 1)
    chosen: list[int] = []
    for cls, quota in zip(classes, quotas):
        members = np.flatnonzero(labels == cls)
        chosen.extend(int(i) for i in rng.choice(members, size=int(quota), replace=False))
    short = n_eval - len(chosen)
    if short > 0:
        rest = np.setdiff1d(np.arange(labels.size), np.asarray(chosen, dtype=np.int64))
        chosen.extend(int(i) for i in rng.choice(rest, size=short, replace=False))
    return np.asarray(sorted(chosen), dtype=np.int64)


def split_train_eval(
    shards: list[LabeledDataset], eval_fraction: float, seed: int = 0
) -> tuple[list[LabeledDataset], LabeledDataset]:
    """
    Hold out ``round(n * eval_fraction)`` samples per shard and pool them.

    The hold-out is stratified by class when every class present in the shard
    has at least two samples, otherwise uniform.

    Raises:
        ContractError: if the fraction is outside (0, 0.5] or a shard is too
            small for a non-empty split
    """
    if not 0.0 < eval_fraction <= 0.5:
        raise ContractError(f"eval_fraction must lie in (0, 0.5], got {eval_fraction}")
    if not shards:
        raise ContractError("No shards to split")
    rng = np.random.default_rng(seed)
    train: list[LabeledDataset] = []
    held_out: list[LabeledDataset] = []
    for shard_id, shard in enumerate(shards):
        n = len(shard)
        n_eval = eval_size(n, eval_fraction)
        if n_eval == 0 or n_eval >= n:
            raise ContractError(
                f"Shard {shard_id} with {n} samples is too small for eval_fraction {eval_fraction}",
                details={"shard": shard_id, "size": n},
            )
        _, counts = np.unique(shard.labels, return_counts=True)
        if counts.min() >= 2:
            eval_idx = _stratified_eval(shard.labels, n_eval, rng)
        else:
            eval_idx = np.sort(rng.choice(n, size=n_eval, replace=False))
        train_idx = np.setdiff1d(np.arange(n), eval_idx)
        train.append(shard.subset(train_idx))
        held_out.append(shard.subset(eval_idx))
    return train, LabeledDataset.concat(held_out)
