"""Synthetic Gaussian-blob classification data and label-skew partitioning."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .core import IID

NUM_CLASSES = 10
NUM_FEATURES = 32
SAMPLES_PER_CLASS = 5000
TEST_PER_CLASS = 1000
CLASS_RADIUS = 3.7


class InsufficientSamples(ValueError):
    def __init__(self, label: int, detail: str = "") -> None:
        super().__init__(f"class {label} cannot satisfy client demand{': ' + detail if detail else ''}")
        self.label = label


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    num_classes: int

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_train(self) -> int:
        return len(self.train_idx)

    @property
    def x_test(self) -> np.ndarray:
        return self.features[self.test_idx]

    @property
    def y_test(self) -> np.ndarray:
        return self.labels[self.test_idx]

    @property
    def x_train(self) -> np.ndarray:
        return self.features[self.train_idx]

    @property
    def y_train(self) -> np.ndarray:
        return self.labels[self.train_idx]


@dataclass(frozen=True)
class ClientShard:
    client_id: int
    indices: np.ndarray
    master_class: int
    x: np.ndarray
    y: np.ndarray

    @property
    def num_samples(self) -> int:
        return len(self.indices)


def generate_synthetic(
    num_classes: int,
    num_features: int,
    samples_per_class: int,
    rng: np.random.Generator,
    test_per_class: int = TEST_PER_CLASS,
    radius: float = CLASS_RADIUS,
) -> Dataset:
    """Class-conditional isotropic Gaussian blobs.

    Class means point in uniformly random directions at distance ``radius``
    from the origin; samples add unit-variance isotropic noise.
    ``samples_per_class`` rows per class go to the train split and
    ``test_per_class`` rows to the test split.
    """
    if min(num_classes, num_features, samples_per_class, test_per_class) < 1:
        raise ValueError("all counts must be positive")
    directions = rng.normal(size=(num_classes, num_features))
    means = radius * directions / np.linalg.norm(directions, axis=1, keepdims=True)
    per_class = samples_per_class + test_per_class
    labels = np.repeat(np.arange(num_classes), per_class)
    features = means[labels] + rng.normal(size=(len(labels), num_features))

    train, test = [], []
    for k in range(num_classes):
        start = k * per_class
        train.append(np.arange(start, start + samples_per_class))
        test.append(np.arange(start + samples_per_class, start + per_class))
    return Dataset(
        features=features,
        labels=labels,
        train_idx=np.concatenate(train),
        test_idx=np.concatenate(test),
        num_classes=num_classes,
    )


def _shard_sizes(total: int, num_clients: int) -> list[int]:
    base, extra = divmod(total, num_clients)
    return [base + (1 if i < extra else 0) for i in range(num_clients)]


def _iid_split(dataset: Dataset, num_clients: int, rng: np.random.Generator) -> list[list[int]]:
    labels = dataset.labels
    buckets: list[list[int]] = [[] for _ in range(num_clients)]
    offset = 0
    for k in range(dataset.num_classes):
        pool = dataset.train_idx[labels[dataset.train_idx] == k]
        pool = rng.permutation(pool)
        for j, idx in enumerate(pool):
            buckets[(offset + j) % num_clients].append(int(idx))
        offset += len(pool)
    return buckets


def partition(
    dataset: Dataset,
    num_clients: int,
    master_fraction: Union[float, str],
    rng: np.random.Generator,
) -> list[ClientShard]:
    """Split the train split into one shard per client.

    With ``master_fraction="iid"`` each class is dealt round-robin across
    clients. Otherwise clients are shuffled, assigned master classes
    round-robin, take ``ceil(fraction * shard_size)`` samples of their master
    class and fill the remainder from the other classes' leftovers.
    """
    num_classes = dataset.num_classes
    if num_clients < 1:
        raise ValueError("num_clients must be positive")
    order = rng.permutation(num_clients)
    masters = np.empty(num_clients, dtype=int)
    masters[order] = np.arange(num_clients) % num_classes

    if master_fraction == IID:
        buckets = _iid_split(dataset, num_clients, rng)
        return _make_shards(dataset, buckets, masters)

    frac = float(master_fraction)
    if not 1.0 / num_classes - 1e-12 <= frac <= 1.0:
        raise ValueError(f"master fraction must lie in [1/{num_classes}, 1], got {frac}")

    sizes = _shard_sizes(dataset.num_train, num_clients)
    n_master = [min(size, math.ceil(frac * size - 1e-9)) for size in sizes]
    remainder = [size - nm for size, nm in zip(sizes, n_master)]

    labels = dataset.labels
    pools = [list(rng.permutation(dataset.train_idx[labels[dataset.train_idx] == k]))
             for k in range(num_classes)]
    buckets: list[list[int]] = [[] for _ in range(num_clients)]
    for c in order:
        k = masters[c]
        if len(pools[k]) < n_master[c]:
            raise InsufficientSamples(int(k), "master-class pool exhausted")
        buckets[c].extend(int(i) for i in pools[k][: n_master[c]])
        pools[k] = pools[k][n_master[c]:]

    # Remaining demand of clients still to be served, split by forbidden class.
    # A class k stays placeable iff its leftovers fit in the demand of clients
    # whose master is not k; taking the forced amount first keeps that true.
    pending = np.zeros(num_classes, dtype=np.int64)
    for c in range(num_clients):
        pending[masters[c]] += remainder[c]
    total_pending = int(pending.sum())
    for k in range(num_classes):
        if len(pools[k]) > total_pending - pending[k]:
            raise InsufficientSamples(k, "leftovers exceed non-master demand")

    for c in order:
        k_own = masters[c]
        pending[k_own] -= remainder[c]
        total_pending -= remainder[c]
        take = np.zeros(num_classes, dtype=np.int64)
        for k in range(num_classes):
            if k != k_own:
                take[k] = max(0, len(pools[k]) - (total_pending - pending[k]))
        free = remainder[c] - int(take.sum())
        if free < 0:
            raise InsufficientSamples(int(np.argmax(take)), "remainder allocation infeasible")
        avail = np.array([len(pools[k]) - take[k] if k != k_own else 0 for k in range(num_classes)])
        if free > avail.sum():
            raise InsufficientSamples(int(k_own), "not enough samples from other classes")
        # uniform draw without replacement over the eligible leftover samples
        if free:
            flat = np.repeat(np.arange(num_classes), avail)
            picked = rng.choice(len(flat), size=free, replace=False)
            take += np.bincount(flat[picked], minlength=num_classes)
        for k in range(num_classes):
            n = int(take[k])
            if n:
                buckets[c].extend(int(i) for i in pools[k][:n])
                pools[k] = pools[k][n:]

    return _make_shards(dataset, buckets, masters)


def _make_shards(dataset: Dataset, buckets: list[list[int]], masters: np.ndarray) -> list[ClientShard]:
    shards = []
    for c, bucket in enumerate(buckets):
        idx = np.sort(np.asarray(bucket, dtype=np.int64))
        shards.append(ClientShard(
            client_id=c,
            indices=idx,
            master_class=int(masters[c]),
            x=dataset.features[idx],
            y=dataset.labels[idx],
        ))
    return shards


def export_shards_csv(shards: list[ClientShard], path: str | Path) -> None:
    """Write ``client_id,sample_index,label`` rows for auditing a partition."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["client_id", "sample_index", "label"])
        for shard in shards:
            for idx, label in zip(shard.indices, shard.y):
                writer.writerow([shard.client_id, int(idx), int(label)])
