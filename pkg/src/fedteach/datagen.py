"""Datasets, long-tail profiles, Dirichlet client partitions and the alignment set."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._seeding import as_generator, stream
from .errors import DatasetError, InsufficientSamplesError, PartitionError

MAX_PARTITION_REDRAWS = 100


@dataclass(eq=False)
class Dataset:
    """Feature matrix, integer labels and stable example ids.

    ``ids`` identify examples in the pool they were drawn from and survive
    subsetting, so disjointness between derived datasets is a set check.
    """

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    ids: np.ndarray = None

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DatasetError(f"features {self.X.shape} and labels {self.y.shape} disagree")
        if self.ids is None:
            self.ids = np.arange(len(self.y), dtype=np.int64)
        self.ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        if self.ids.shape != self.y.shape:
            raise DatasetError("ids must have one entry per example")
        if self.num_classes < 1:
            raise DatasetError("num_classes must be positive")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.X)):
            raise DatasetError("features must be finite")

    def __len__(self):
        return len(self.y)

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def class_counts(self):
        return np.bincount(self.y, minlength=self.num_classes)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[indices], self.y[indices], self.num_classes, self.ids[indices])

    def class_indices(self, cls):
        return np.flatnonzero(self.y == cls)


@dataclass(frozen=True)
class LongTailSpec:
    imbalance_factor: float
    max_per_class: int

    def __post_init__(self):
        if self.imbalance_factor < 1:
            raise ValueError("imbalance factor must be >= 1")
        if self.max_per_class < 1:
            raise ValueError("max_per_class must be >= 1")


@dataclass
class PartitionPlan:
    client_indices: list
    concentration: float
    num_clients: int = field(init=False)

    def __post_init__(self):
        self.client_indices = [np.asarray(ix, dtype=np.int64) for ix in self.client_indices]
        self.num_clients = len(self.client_indices)

    @property
    def sizes(self):
        return np.array([len(ix) for ix in self.client_indices], dtype=np.int64)

    def shard(self, data, client):
        return data.subset(self.client_indices[client])

    def validate(self, n_examples):
        """Raise unless the shards are disjoint and cover ``range(n_examples)``."""
        allidx = np.concatenate(self.client_indices) if self.client_indices else np.array([])
        if len(allidx) != n_examples or not np.array_equal(np.sort(allidx), np.arange(n_examples)):
            raise PartitionError("shards are not a disjoint cover of the dataset")


def generate_synthetic(num_classes, dim, n_per_class, class_separation, seed, split="train"):
    """Class-conditional unit-covariance Gaussian clusters.

    Means are standard normal draws rescaled so that the closest pair of
    class means is exactly ``class_separation`` apart. Means depend only on
    ``seed``; samples depend on ``(seed, split)``, so a train and a test draw
    share the same class geometry.
    """
    if num_classes < 2:
        raise DatasetError("need at least two classes")
    if dim < 1:
        raise DatasetError("feature dimension must be >= 1")
    counts = np.broadcast_to(np.asarray(n_per_class, dtype=np.int64), (num_classes,))
    if np.any(counts <= 0):
        raise DatasetError("every class needs at least one example")
    means = stream(seed, "class_means").normal(size=(num_classes, dim))
    gaps = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
    closest = gaps[~np.eye(num_classes, dtype=bool)].min()
    means *= class_separation / closest
    rng = stream(seed, "samples", split)
    X = np.concatenate([means[c] + rng.normal(size=(counts[c], dim)) for c in range(num_classes)])
    y = np.repeat(np.arange(num_classes), counts)
    return Dataset(X, y, num_classes)


def long_tail_counts(num_classes, spec):
    """Per-class sizes ``floor(n_max * IF ** (-k / (K - 1)))`` for k = 0..K-1."""
    k = np.arange(num_classes)
    exponent = -k / (num_classes - 1) if num_classes > 1 else np.zeros(1)
    raw = spec.max_per_class * np.power(float(spec.imbalance_factor), exponent)
    # guard against 49.999999 style float error on exact profiles
    counts = np.floor(raw + 1e-9).astype(np.int64)
    if np.any(counts < 1):
        cls = int(np.flatnonzero(counts < 1)[0])
        raise DatasetError(f"class {cls} would keep zero samples; raise max_per_class")
    return counts


def apply_long_tail(data, spec, seed):
    """Subsample each class uniformly without replacement to the long-tail profile."""
    rng = as_generator(seed)
    counts = long_tail_counts(data.num_classes, spec)
    keep = []
    for c, n in enumerate(counts):
        idx = data.class_indices(c)
        if len(idx) < n:
            raise InsufficientSamplesError(c, int(n), len(idx))
        keep.append(np.sort(rng.choice(idx, size=int(n), replace=False)))
    return data.subset(np.concatenate(keep))


def split_server_reserve(data, fraction, seed):
    """Stratified split into (client pool, server-reserved pool)."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("reserve fraction must be in [0, 1)")
    rng = as_generator(seed)
    client, server = [], []
    for c in range(data.num_classes):
        idx = rng.permutation(data.class_indices(c))
        n_server = int(round(fraction * len(idx)))
        server.append(idx[:n_server])
        client.append(idx[n_server:])
    return (data.subset(np.sort(np.concatenate(client))),
            data.subset(np.sort(np.concatenate(server))))


def largest_remainder(proportions, total):
    """Integer allocation of ``total`` that follows ``proportions`` and sums exactly."""
    raw = np.asarray(proportions, dtype=np.float64) * total
    base = np.floor(raw).astype(np.int64)
    rest = int(total - base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rest]] += 1
    return base


def dirichlet_partition(data, num_clients, concentration, seed):
    """Split examples over clients with per-class symmetric Dirichlet proportions.

    A draw that leaves some client empty is discarded and redrawn.
    """
    if num_clients < 1:
        raise ValueError("need at least one client")
    if not concentration > 0:
        raise ValueError("Dirichlet concentration must be positive")
    rng = as_generator(seed)
    per_class = [data.class_indices(c) for c in range(data.num_classes)]
    for _ in range(MAX_PARTITION_REDRAWS):
        shards = [[] for _ in range(num_clients)]
        for idx in per_class:
            if len(idx) == 0:
                continue
            props = rng.dirichlet(np.full(num_clients, float(concentration)))
            alloc = largest_remainder(props, len(idx))
            cuts = np.concatenate([[0], np.cumsum(alloc)])
            shuffled = rng.permutation(idx)
            for k in range(num_clients):
                shards[k].append(shuffled[cuts[k]:cuts[k + 1]])
        shards = [np.sort(np.concatenate(s)) for s in shards]
        if all(len(s) for s in shards):
            return PartitionPlan(shards, concentration)
    raise PartitionError(
        f"every one of {MAX_PARTITION_REDRAWS} Dirichlet draws left a client empty"
    )


def build_alignment_set(data_source, per_class, seed):
    """Class-balanced sample of exactly ``per_class`` examples per class."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    rng = as_generator(seed)
    keep = []
    for c in range(data_source.num_classes):
        idx = data_source.class_indices(c)
        if len(idx) < per_class:
            raise InsufficientSamplesError(c, per_class, len(idx))
        keep.append(np.sort(rng.choice(idx, size=per_class, replace=False)))
    return data_source.subset(np.concatenate(keep))
