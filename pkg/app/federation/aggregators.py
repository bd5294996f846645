"""
Server-side aggregation rules.

Every reduction sums client contributions in the order given, which the
engine fixes to ascending client id, so results do not depend on how clients
were scheduled. When all contributions are bitwise identical the reduction
returns them unchanged.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from app.adapters.lora import LoraPair, effective_update
from app.errors import ContractError, RankOutOfRangeError
from app.linalg import Matrix, fix_svd_signs, svd_full, tail_mass
from app.model.base import ParamSet
from app.schemas import Factorization, Weighting


@dataclass(frozen=True)
class AggregationResult:
    """
    Output of one aggregation.

    Attributes:
        params: new global parameters (direct averaging)
        pairs: new global adapters (LoRA strategies)
        updates: aggregated effective update per target
        client_updates: per-client effective update per target
        tail_mass: squared singular mass discarded per target (FlexLoRA)
    """

    params: ParamSet | None = None
    pairs: list[LoraPair] | None = None
    updates: dict[str, Matrix] = field(default_factory=dict)
    client_updates: dict[str, list[Matrix]] = field(default_factory=dict)
    tail_mass: dict[str, float] = field(default_factory=dict)


def client_weights(sizes: Sequence[int], weighting: Weighting) -> list[float]:
    """Normalized FedAvg weights."""
    if not sizes:
        raise ContractError("No clients to aggregate")
    if weighting == Weighting.UNIFORM:
        return [1.0 / len(sizes)] * len(sizes)
    total = float(sum(sizes))
    if total <= 0:
        raise ContractError("Size weighting needs at least one non-empty client")
    return [s / total for s in sizes]


def weighted_mean(matrices: Sequence[Matrix], weights: Sequence[float]) -> Matrix:
    """Weighted sum in list order; identical inputs come back unchanged."""
    first = matrices[0]
    for m in matrices[1:]:
        if m.shape != first.shape:
            raise ContractError(f"Cannot average shapes {first.shape} and {m.shape}")
    if all(np.array_equal(first, m) for m in matrices[1:]):
        return first.copy()
    total = np.zeros_like(first)
    for w, m in zip(weights, matrices):
        total = total + w * m
    return total


def aggregate_direct(
    clients: Sequence[ParamSet],
    weighting: Weighting = Weighting.UNIFORM,
    sizes: Sequence[int] | None = None,
    reference: ParamSet | None = None,
) -> AggregationResult:
    """
    FedAvg of full trainable matrices.

    Non-trainable matrices are copied from the first client. With a
    ``reference`` (the last broadcast) the result also reports per-target updates.

    Raises:
        ContractError: if client parameter sets are not congruent
    """
    if not clients:
        raise ContractError("No clients to aggregate")
    first = clients[0]
    for other in clients[1:]:
        first.check_congruent(other)
    weights = client_weights(sizes if sizes is not None else [1] * len(clients), weighting)
    merged = {
        name: weighted_mean([c[name] for c in clients], weights) for name in first.trainable_names
    }
    result = first.replace(merged)
    updates: dict[str, Matrix] = {}
    client_updates: dict[str, list[Matrix]] = {}
    if reference is not None:
        for name in first.trainable_names:
            updates[name] = result[name] - reference[name]
            client_updates[name] = [c[name] - reference[name] for c in clients]
    return AggregationResult(params=result, updates=updates, client_updates=client_updates)


def _check_pairs(clients: Sequence[Sequence[LoraPair]]) -> None:
    if not clients:
        raise ContractError("No clients to aggregate")
    targets = [p.target for p in clients[0]]
    for pairs in clients[1:]:
        if [p.target for p in pairs] != targets:
            raise ContractError("Clients adapt different targets")
        for a, b in zip(clients[0], pairs):
            if a.a.shape != b.a.shape or a.b.shape != b.b.shape:
                raise ContractError(
                    f"Adapter rank mismatch on '{a.target}'",
                    details={"ranks": [a.rank, b.rank]},
                )


def _effective(clients: Sequence[Sequence[LoraPair]], j: int) -> list[Matrix]:
    return [effective_update(pairs[j]) for pairs in clients]


def aggregate_fedit(
    clients: Sequence[Sequence[LoraPair]],
    weighting: Weighting = Weighting.UNIFORM,
    sizes: Sequence[int] | None = None,
) -> AggregationResult:
    """Average B factors and A factors independently."""
    _check_pairs(clients)
    weights = client_weights(sizes if sizes is not None else [1] * len(clients), weighting)
    out = []
    updates: dict[str, Matrix] = {}
    client_updates: dict[str, list[Matrix]] = {}
    for j, template in enumerate(clients[0]):
        b = weighted_mean([pairs[j].b for pairs in clients], weights)
        a = weighted_mean([pairs[j].a for pairs in clients], weights)
        pair = replace(template, a=a, b=b)
        out.append(pair)
        updates[template.target] = effective_update(pair)
        client_updates[template.target] = _effective(clients, j)
    return AggregationResult(pairs=out, updates=updates, client_updates=client_updates)


def aggregate_flexlora(
    clients: Sequence[Sequence[LoraPair]],
    weighting: Weighting = Weighting.UNIFORM,
    r_target: int | None = None,
    sizes: Sequence[int] | None = None,
    factorization: Factorization = Factorization.FOLD,
) -> AggregationResult:
    """
    Average effective updates, then redistribute a rank-``r_target`` factorization.

    The average M is decomposed with a full SVD whose signs are fixed so each
    U column has a positive largest-magnitude entry. The reported update per
    target is M itself; the redistributed pair reconstructs its truncation.

    Raises:
        RankOutOfRangeError: if ``r_target`` exceeds min(d, k)
    """
    _check_pairs(clients)
    weights = client_weights(sizes if sizes is not None else [1] * len(clients), weighting)
    out = []
    updates: dict[str, Matrix] = {}
    client_updates: dict[str, list[Matrix]] = {}
    tails: dict[str, float] = {}
    for j, template in enumerate(clients[0]):
        per_client = _effective(clients, j)
        m = weighted_mean(per_client, weights)
        rank = r_target if r_target is not None else template.rank
        d, k = m.shape
        if not 1 <= rank <= min(d, k):
            raise RankOutOfRangeError(rank, d, k)
        svd = fix_svd_signs(svd_full(m))
        tails[template.target] = tail_mass(svd.singular_values, rank)
        top = svd.truncate(rank)
        scale = template.scale
        if factorization == Factorization.FOLD:
            b = (top.u * top.singular_values) / scale
            a = top.vt
        else:
            root = np.sqrt(top.singular_values)
            b = (top.u * root) / np.sqrt(scale)
            a = (top.vt * root[:, None]) / np.sqrt(scale)
        out.append(replace(template, a=a, b=b))
        updates[template.target] = m
        client_updates[template.target] = per_client
    return AggregationResult(
        pairs=out, updates=updates, client_updates=client_updates, tail_mass=tails
    )


def aggregate_ffalora(
    clients: Sequence[Sequence[LoraPair]],
    weighting: Weighting = Weighting.UNIFORM,
    sizes: Sequence[int] | None = None,
) -> AggregationResult:
    """
    Average B factors over a shared frozen A.

    Raises:
        ContractError: if the A factors are not bitwise identical across clients
    """
    _check_pairs(clients)
    weights = client_weights(sizes if sizes is not None else [1] * len(clients), weighting)
    out = []
    updates: dict[str, Matrix] = {}
    client_updates: dict[str, list[Matrix]] = {}
    for j, template in enumerate(clients[0]):
        for pairs in clients[1:]:
            if not np.array_equal(pairs[j].a, template.a):
                raise ContractError(
                    f"Frozen A factors diverge across clients on '{template.target}'",
                    details={"target": template.target},
                )
        b = weighted_mean([pairs[j].b for pairs in clients], weights)
        pair = replace(template, b=b)
        out.append(pair)
        updates[template.target] = effective_update(pair)
        client_updates[template.target] = _effective(clients, j)
    return AggregationResult(pairs=out, updates=updates, client_updates=client_updates)
