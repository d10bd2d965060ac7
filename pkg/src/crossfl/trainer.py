"""On-device training engine: a configurable MLP with manual backprop.

Exposes the four standardized methods every client runtime needs: train,
infer, parameters, restore (plus evaluate). All math runs in float64;
parameters cross to float32 only at the package/wire boundary, i.e. in
parameters()/restore(). Models never self-initialize: initial weights
always arrive from a model package.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyDataset, InvalidConfig, SchemaMismatch
from .model_package import LayerSpec, ModelManifest, ParameterSet


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.learning_rate < 10.0:
            raise InvalidConfig(f"learning_rate must be in [0, 10), got {self.learning_rate}")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class TrainStats:
    per_epoch_loss: tuple[float, ...]
    wall_time_s: float
    examples_seen: int


@dataclass
class DataShard:
    """Feature matrix (n, d) plus targets: class indices for classification,
    real values (n,) or (n, out) for regression."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got shape {self.features.shape}")

    @property
    def num_examples(self) -> int:
        return self.features.shape[0]


def _relu(z):
    return np.maximum(z, 0.0)


def _softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _fisher_yates(n: int, seed: int) -> np.ndarray:
    """Seeded shuffle order; PCG64 supplies the index draws."""
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        idx[i], idx[j] = idx[j], idx[i]
    return idx


class MlpModel:
    """Dense feed-forward network defined by a manifest architecture.

    Weights live as float64 arrays in self.weights / self.biases (canonical
    layer order); train() is the only operation that mutates them.
    """

    def __init__(self, architecture, loss: str):
        self.architecture = tuple(
            l if isinstance(l, LayerSpec) else LayerSpec(*l) for l in architecture
        )
        self.loss = loss
        if not self.architecture:
            raise SchemaMismatch("architecture must have at least one layer")
        for i in range(1, len(self.architecture)):
            if self.architecture[i].input_dim != self.architecture[i - 1].output_dim:
                raise SchemaMismatch(
                    f"layer {i} input_dim {self.architecture[i].input_dim} != "
                    f"layer {i - 1} output_dim {self.architecture[i - 1].output_dim}"
                )
        for i, layer in enumerate(self.architecture):
            if layer.activation == "softmax" and i != len(self.architecture) - 1:
                raise SchemaMismatch("softmax is only permitted on the final layer")
        final_act = self.architecture[-1].activation
        if (self.loss == "cross_entropy") != (final_act == "softmax"):
            raise SchemaMismatch(
                f"loss {self.loss!r} and final activation {final_act!r} do not pair"
            )
        self.weights = [
            np.zeros((l.input_dim, l.output_dim), dtype=np.float64) for l in self.architecture
        ]
        self.biases = [np.zeros(l.output_dim, dtype=np.float64) for l in self.architecture]

    @classmethod
    def from_manifest(cls, manifest: ModelManifest, params: ParameterSet) -> "MlpModel":
        model = cls(manifest.architecture, manifest.loss)
        model.restore(params)
        return model

    @property
    def input_dim(self) -> int:
        return self.architecture[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.architecture[-1].output_dim

    # -- the four standardized methods ------------------------------------

    def parameters(self) -> ParameterSet:
        """Current parameters in canonical order, cast to single precision."""
        tensors = []
        for w, b in zip(self.weights, self.biases):
            tensors.append(w)
            tensors.append(b)
        return ParameterSet.from_arrays(tensors)

    def restore(self, params: ParameterSet) -> "MlpModel":
        """Overwrite all parameters from a canonical set."""
        expected = []
        for l in self.architecture:
            expected.append((l.input_dim, l.output_dim))
            expected.append((l.output_dim,))
        if params.shapes != tuple(expected):
            raise SchemaMismatch(
                f"parameter shapes {params.shapes} do not match architecture {tuple(expected)}"
            )
        for k in range(len(self.architecture)):
            self.weights[k] = params.tensors[2 * k].astype(np.float64)
            self.biases[k] = params.tensors[2 * k + 1].astype(np.float64)
        return self

    def infer(self, inputs: np.ndarray) -> np.ndarray:
        """Forward pass over a batch of row vectors."""
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"inputs must be (n, {self.input_dim}), got {x.shape}"
            )
        return self._forward(x)[-1]

    def train(self, shard: DataShard, config: TrainConfig) -> TrainStats:
        """Mini-batch SGD; deterministic given config.seed."""
        x, y = self._check_shard(shard)
        n = x.shape[0]
        if config.batch_size > n:
            raise InvalidConfig(
                f"batch_size {config.batch_size} exceeds dataset size {n}"
            )
        lr = config.learning_rate
        losses = []
        start = time.perf_counter()
        for epoch in range(config.epochs):
            order = _fisher_yates(n, config.seed ^ epoch)
            total = 0.0
            for lo in range(0, n, config.batch_size):
                batch = order[lo : lo + config.batch_size]
                loss, grads_w, grads_b = self._loss_and_grads(x[batch], y[batch])
                total += loss * len(batch)
                for k in range(len(self.weights)):
                    self.weights[k] -= lr * grads_w[k]
                    self.biases[k] -= lr * grads_b[k]
            losses.append(total / n)
        wall = time.perf_counter() - start
        return TrainStats(
            per_epoch_loss=tuple(losses),
            wall_time_s=wall,
            examples_seen=config.epochs * n,
        )

    def evaluate(self, shard: DataShard) -> tuple[float, float]:
        """Mean loss plus accuracy (classification) or RMSE (regression)."""
        x, y = self._check_shard(shard)
        loss = self._batch_loss(x, y)
        out = self._forward(x)[-1]
        if self.loss == "cross_entropy":
            metric = float(np.mean(np.argmax(out, axis=1) == y))
        else:
            metric = float(np.sqrt(np.mean((out - y) ** 2)))
        return loss, metric

    # -- internals ----------------------------------------------------------

    def _check_shard(self, shard: DataShard):
        n = shard.num_examples
        if n == 0:
            raise EmptyDataset("shard has no examples")
        x = shard.features
        if x.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"shard features have dim {x.shape[1]}, model expects {self.input_dim}"
            )
        if self.loss == "cross_entropy":
            y = np.asarray(shard.labels)
            if y.ndim != 1 or y.shape[0] != n:
                raise DimensionMismatch(f"labels must be (n,), got {y.shape}")
            y = y.astype(np.int64)
            if y.min() < 0 or y.max() >= self.output_dim:
                raise DimensionMismatch(
                    f"labels outside [0, {self.output_dim}): {y.min()}..{y.max()}"
                )
        else:
            y = np.asarray(shard.labels, dtype=np.float64)
            if y.ndim == 1:
                y = y.reshape(-1, 1)
            if y.shape != (n, self.output_dim):
                raise DimensionMismatch(
                    f"targets must be (n, {self.output_dim}), got {y.shape}"
                )
        return x, y

    def _forward(self, x: np.ndarray) -> list[np.ndarray]:
        """Activations per layer; index 0 is the input."""
        acts = [x]
        h = x
        for k, layer in enumerate(self.architecture):
            z = h @ self.weights[k] + self.biases[k]
            if layer.activation == "relu":
                h = _relu(z)
            elif layer.activation == "softmax":
                h = _softmax(z)
            else:
                h = z
            acts.append(h)
        return acts

    def _pre_activations(self, x: np.ndarray) -> list[np.ndarray]:
        zs = []
        h = x
        for k, layer in enumerate(self.architecture):
            z = h @ self.weights[k] + self.biases[k]
            zs.append(z)
            if layer.activation == "relu":
                h = _relu(z)
            elif layer.activation == "softmax":
                h = _softmax(z)
            else:
                h = z
        return zs

    def _batch_loss(self, x: np.ndarray, y: np.ndarray) -> float:
        if self.loss == "cross_entropy":
            zs = self._pre_activations(x)
            z = zs[-1]
            # log-sum-exp form keeps extreme logits finite
            lse = np.log(np.sum(np.exp(z - z.max(axis=1, keepdims=True)), axis=1))
            lse += z.max(axis=1)
            picked = z[np.arange(len(y)), y]
            return float(np.mean(lse - picked))
        out = self._forward(x)[-1]
        return float(np.mean(np.sum((out - y) ** 2, axis=1)))

    def _loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Batch loss and analytic gradients for every weight and bias.

        Loss conventions: squared error is summed over output dims and
        averaged over the batch; cross-entropy is averaged over the batch.
        """
        nb = x.shape[0]
        acts = self._forward(x)
        out = acts[-1]
        if self.loss == "cross_entropy":
            onehot = np.zeros_like(out)
            onehot[np.arange(nb), y] = 1.0
            delta = (out - onehot) / nb
            loss = self._batch_loss(x, y)
        else:
            loss = float(np.mean(np.sum((out - y) ** 2, axis=1)))
            delta = 2.0 * (out - y) / nb
            if self.architecture[-1].activation == "relu":
                delta = delta * (out > 0.0)

        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for k in range(len(self.architecture) - 1, -1, -1):
            grads_w[k] = acts[k].T @ delta
            grads_b[k] = delta.sum(axis=0)
            if k > 0:
                delta = delta @ self.weights[k].T
                if self.architecture[k - 1].activation == "relu":
                    delta = delta * (acts[k] > 0.0)
        return loss, grads_w, grads_b
