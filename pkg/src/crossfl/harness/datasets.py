"""Synthetic tasks and deterministic sharding.

Two task families stand in for the real-device datasets: a two-Gaussian
blob classification problem and a sleep-duration regression whose target
is a linear combination of daily-activity features plus Gaussian noise.
Generation is a pure function of (kind, n, seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..seeding import derive_seed
from ..trainer import DataShard

BLOBS = "blobs_classification"
SLEEP = "sleep_regression"
TASK_KINDS = (BLOBS, SLEEP)

# Feature scaling constants for the sleep task, fixed so shards generated
# anywhere are directly comparable.
_STEPS_SCALE = 10000.0
_MINUTES_SCALE = 60.0
_HOUR_CENTER, _HOUR_SCALE = 22.0, 2.0
_SLEEP_COEFS = np.array([0.8, 0.5, -0.9])
_SLEEP_BASE = 7.0
_SLEEP_NOISE = 0.1


@dataclass(frozen=True)
class SyntheticTask:
    kind: str
    n_examples: int
    seed: int
    features: int = 4  # blobs only; 2..8

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == BLOBS and not 2 <= self.features <= 8:
            raise ValueError(f"blobs features must be in 2..8, got {self.features}")

    @property
    def input_dim(self) -> int:
        return self.features if self.kind == BLOBS else 3

    @property
    def classification(self) -> bool:
        return self.kind == BLOBS


def generate_dataset(task: SyntheticTask) -> DataShard:
    rng = np.random.Generator(np.random.PCG64(task.seed))
    n = task.n_examples
    if task.kind == BLOBS:
        labels = np.zeros(n, dtype=np.int64)
        labels[n // 2 :] = 1
        centers = np.where(labels[:, None] == 0, -0.8, 0.8)
        x = centers + rng.standard_normal((n, task.features))
        return DataShard(features=x, labels=labels)

    steps = rng.uniform(2000.0, 14000.0, n) / _STEPS_SCALE
    minutes = rng.uniform(10.0, 120.0, n) / _MINUTES_SCALE
    hours = (rng.uniform(20.0, 26.0, n) - _HOUR_CENTER) / _HOUR_SCALE
    x = np.column_stack([steps, minutes, hours])
    y = _SLEEP_BASE + x @ _SLEEP_COEFS + rng.normal(0.0, _SLEEP_NOISE, n)
    return DataShard(features=x, labels=y)


def _classes_of(shard: DataShard, classification: bool) -> np.ndarray:
    if classification:
        return np.asarray(shard.labels, dtype=np.int64)
    y = np.asarray(shard.labels, dtype=np.float64).ravel()
    return (y > np.median(y)).astype(np.int64)


def generate_shards(task: SyntheticTask, k: int, partition: str = "iid") -> list[DataShard]:
    """Split the task's dataset into k disjoint covering shards.

    iid: seeded shuffle then near-equal contiguous blocks. label_skew:
    each client's shard is ~90% one class, so the majority fraction stays
    comfortably above the 0.8 contract.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    partition_codes = {"iid": 0, "label_skew": 1}
    if partition not in partition_codes:
        raise ValueError(f"unknown partition {partition!r}")
    data = generate_dataset(task)
    n = data.num_examples
    rng = np.random.Generator(np.random.PCG64(derive_seed(task.seed, k, partition_codes[partition])))

    def take(indices: np.ndarray) -> DataShard:
        return DataShard(features=data.features[indices], labels=np.asarray(data.labels)[indices])

    if partition == "iid":
        order = rng.permutation(n)
        sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
        shards, at = [], 0
        for s in sizes:
            shards.append(take(order[at : at + s]))
            at += s
        return shards

    classes = _classes_of(data, task.classification)
    n_classes = int(classes.max()) + 1
    pools = [list(rng.permutation(np.flatnonzero(classes == c))) for c in range(n_classes)]
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    assignments: list[list[int]] = [[] for _ in range(k)]
    for i in range(k):
        majority = i % n_classes
        want_major = int(round(0.9 * sizes[i]))
        got = min(want_major, len(pools[majority]))
        assignments[i].extend(pools[majority][:got])
        del pools[majority][:got]
        # minority fill, round-robin over the other classes
        need = sizes[i] - got
        c = (majority + 1) % n_classes
        while need > 0 and any(pools):
            if pools[c]:
                assignments[i].append(pools[c].pop())
                need -= 1
            c = (c + 1) % n_classes
    # anything left (rounding) goes to the matching-majority clients
    for c, pool in enumerate(pools):
        for idx in pool:
            assignments[c % k].append(idx)
    return [take(np.array(sorted(a), dtype=np.int64)) for a in assignments]


# ---------------------------------------------------------------------------
# Optional CSV exchange: header of feature names plus a final label column.
# ---------------------------------------------------------------------------

def save_shard_csv(shard: DataShard, path) -> None:
    path = Path(path)
    x = shard.features
    y = np.asarray(shard.labels)
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        writer.writerow([f"x{i}" for i in range(x.shape[1])] + ["label"])
        for i in range(x.shape[0]):
            label = y[i]
            writer.writerow([repr(float(v)) for v in x[i]] + [
                str(int(label)) if np.issubdtype(y.dtype, np.integer) else repr(float(label))
            ])


def load_shard_csv(path) -> DataShard:
    """Read a shard CSV; integral label columns load as class indices."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.reader(fp)
        header = next(reader)
        if not header or header[-1] != "label":
            raise ValueError(f"{path}: last CSV column must be named 'label'")
        rows = [row for row in reader if row]
    x = np.array([[float(v) for v in row[:-1]] for row in rows], dtype=np.float64)
    raw = [row[-1] for row in rows]
    try:
        labels = np.array([int(v) for v in raw], dtype=np.int64)
    except ValueError:
        labels = np.array([float(v) for v in raw], dtype=np.float64)
    return DataShard(features=x, labels=labels)
