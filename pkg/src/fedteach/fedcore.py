"""Federated rounds: client selection, local SGD and data-weighted averaging."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._seeding import stream
from .errors import ShapeError
from .training import sgd_fit


@dataclass(frozen=True)
class FedConfig:
    num_clients: int = 20
    fraction: float = 0.4
    rounds: int = 30
    local_epochs: int = 1
    lr: float = 0.05
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("participation fraction must be in (0, 1]")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.num_clients < 1:
            raise ValueError("need at least one client")


@dataclass
class RoundRecord:
    """What the server saw in one round.

    Only client ids, shard sizes, aggregation weights and metrics are kept;
    clients upload parameters, never gradients. ``params`` is the aggregated
    model held in memory and is reduced to a digest when serialized.
    """

    round: int
    selected: list
    sizes: list
    weights: list
    metrics: dict = field(default_factory=dict)
    params_sha256: str = ""
    params: object = None

    def to_json(self):
        rec = {
            "round": self.round,
            "selected": [int(c) for c in self.selected],
            "sizes": [int(s) for s in self.sizes],
            "weights": [float(w) for w in self.weights],
            "metrics": self.metrics,
            "params_sha256": self.params_sha256,
        }
        return rec


def participants(num_clients, fraction):
    # tolerance keeps 0.4 * 20 at 8 despite binary rounding
    return max(1, math.ceil(fraction * num_clients - 1e-9))


def select_clients(num_clients, fraction, seed, round_index):
    """Uniform draw without replacement of ``ceil(fraction * num_clients)`` ids."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("participation fraction must be in (0, 1]")
    m = participants(num_clients, fraction)
    rng = stream(seed, "select", round_index)
    return np.sort(rng.choice(num_clients, size=m, replace=False))


def client_seed(seed, round_index, client):
    """SGD stream for one client in one round; independent of visiting order."""
    return stream(seed, "local", round_index, client)


def local_update(global_params, shard, epochs, lr, batch_size, seed, context="local update"):
    if len(shard) == 0:
        raise ValueError("client shard is empty")
    params, _ = sgd_fit(global_params, shard.X, shard.y, epochs=epochs, lr=lr,
                        batch_size=batch_size, seed=seed, context=context)
    return params


def aggregate(updates):
    """Weighted mean of client params with weights ``|D_k| / sum |D_k|``."""
    if not updates:
        raise ValueError("nothing to aggregate")
    first = updates[0][0]
    sizes = np.array([s for _, s in updates], dtype=np.float64)
    if np.any(sizes <= 0):
        raise ValueError("client data sizes must be positive")
    for i, (p, _) in enumerate(updates):
        if not p.same_shape(first):
            raise ShapeError(f"update {i} has shape {p.sizes}, expected {first.sizes}")
    weights = sizes / sizes.sum()
    acc = np.zeros_like(first.flat)
    for (p, _), w in zip(updates, weights):
        acc += w * p.flat
    return first.with_flat(acc)


def round_weights(sizes):
    sizes = np.asarray(sizes, dtype=np.float64)
    return sizes / sizes.sum()


@dataclass(frozen=True)
class ClientState:
    """One client's shard and, once it has trained, its local params."""

    client_id: int
    shard: np.ndarray
    params: object = None

    def __post_init__(self):
        if len(self.shard) == 0:
            raise ValueError(f"client {self.client_id} has an empty shard")

    def train(self, global_params, data, cfg, round_index):
        local = local_update(global_params, data.subset(self.shard), cfg.local_epochs, cfg.lr,
                             cfg.batch_size, client_seed(cfg.seed, round_index, self.client_id),
                             context=f"round {round_index}, client {self.client_id}")
        return ClientState(self.client_id, self.shard, local)


@dataclass(frozen=True)
class RoundPlan:
    round: int
    selected: tuple
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights)
        if len(w) != len(self.selected) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"round {self.round}: bad aggregation weights {self.weights}")


def plan_round(cfg, partition, round_index):
    selected = tuple(int(k) for k in
                     select_clients(cfg.num_clients, cfg.fraction, cfg.seed, round_index))
    weights = round_weights([partition.sizes[k] for k in selected])
    return RoundPlan(round_index, selected, tuple(float(x) for x in weights))


def run_federated(init_params, cfg, partition, data, *, evaluate=None, log=None,
                  keep_params=False):
    """Run ``cfg.rounds`` FedAvg rounds; returns (final params, list of RoundRecord).

    ``evaluate`` maps params to a metrics dict recorded each round. ``log``
    is an open text file receiving one JSON line per round.
    """
    if partition.num_clients != cfg.num_clients:
        raise ValueError(
            f"partition has {partition.num_clients} clients, config {cfg.num_clients}"
        )
    partition.validate(len(data))
    params = init_params.copy()
    records = []
    sizes_all = partition.sizes
    for t in range(cfg.rounds):
        plan = plan_round(cfg, partition, t)
        updates = []
        for k in plan.selected:
            client = ClientState(k, partition.client_indices[k])
            local = client.train(params, data, cfg, t).params
            updates.append((local, len(client.shard)))
        params = aggregate(updates)
        rec = RoundRecord(
            round=t,
            selected=list(plan.selected),
            sizes=[s for _, s in updates],
            weights=list(plan.weights),
            metrics=evaluate(params) if evaluate is not None else {},
            params_sha256=hashlib.sha256(params.flat.tobytes()).hexdigest(),
            params=params.copy() if keep_params else None,
        )
        records.append(rec)
        if log is not None:
            log.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
    return params, records
