"""Multinomial logistic regression and the federated training primitives."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

CHECKPOINT_MAGIC = b"FDCT"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class NonFinite(FloatingPointError):
    pass


class EmptyAggregation(ValueError):
    pass


@dataclass(frozen=True)
class ModelState:
    """Flat parameters: row-major weights [classes x features] then biases.

    ``client_id`` is None for a global model and the uploader's id for a
    client update.
    """

    params: np.ndarray
    num_classes: int
    num_features: int
    round_produced: int = 0
    client_id: Optional[int] = None

    @property
    def is_global(self) -> bool:
        return self.client_id is None

    @property
    def weights(self) -> np.ndarray:
        n = self.num_classes * self.num_features
        return self.params[:n].reshape(self.num_classes, self.num_features)

    @property
    def biases(self) -> np.ndarray:
        return self.params[self.num_classes * self.num_features:]


def num_params(num_classes: int, num_features: int) -> int:
    return num_classes * num_features + num_classes


def init_model(num_classes: int, num_features: int, rng: np.random.Generator) -> ModelState:
    if num_classes < 1 or num_features < 1:
        raise ValueError("counts must be positive")
    weights = rng.uniform(-0.05, 0.05, size=num_classes * num_features)
    params = np.concatenate([weights, np.zeros(num_classes)])
    return ModelState(params, num_classes, num_features)


def logits(params: np.ndarray, x: np.ndarray, num_classes: int) -> np.ndarray:
    d = x.shape[1]
    w = params[: num_classes * d].reshape(num_classes, d)
    b = params[num_classes * d:]
    return x @ w.T + b


def loss_and_grad(params: np.ndarray, x: np.ndarray, y: np.ndarray, num_classes: int) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient wrt ``params``."""
    z = logits(params, x, num_classes)
    z = z - z.max(axis=1, keepdims=True)
    exp_z = np.exp(z)
    denom = exp_z.sum(axis=1, keepdims=True)
    probs = exp_z / denom
    n = len(y)
    rows = np.arange(n)
    loss = float(np.mean(np.log(denom[:, 0]) - z[rows, y]))
    err = probs
    err[rows, y] -= 1.0
    err /= n
    grad = np.concatenate([(err.T @ x).ravel(), err.sum(axis=0)])
    return loss, grad


def train_client(
    global_model: ModelState,
    x: np.ndarray,
    y: np.ndarray,
    epochs: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    client_id: int = 0,
    round_produced: int = 0,
) -> ModelState:
    """Mini-batch SGD on the client's samples; the input model is not mutated.

    Batch order for every epoch is drawn from ``rng``, so running E epochs at
    once equals E one-epoch calls sharing the same generator.
    """
    n = len(y)
    if n == 0:
        raise ValueError("client shard is empty")
    k = global_model.num_classes
    params = global_model.params.copy()
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            loss, grad = loss_and_grad(params, x[batch], y[batch], k)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise NonFinite(f"non-finite loss/gradient on client {client_id}; learning rate too high?")
            params -= lr * grad
    if not np.all(np.isfinite(params)):
        raise NonFinite(f"non-finite parameters on client {client_id}")
    return ModelState(params, k, global_model.num_features, round_produced, client_id)


def aggregate(updates: Sequence[tuple[ModelState, float]], round_produced: int = 0) -> ModelState:
    """Sample-size weighted mean of client models."""
    if not updates:
        raise EmptyAggregation("no client updates to aggregate")
    first = updates[0][0]
    sizes = np.array([s for _, s in updates], dtype=float)
    if np.any(sizes <= 0):
        raise ValueError("sample counts must be positive")
    stacked = np.stack([u.params for u, _ in updates])
    if stacked.shape[1] != len(first.params):
        raise ValueError("parameter vectors differ in length")
    params = (sizes / sizes.sum()) @ stacked
    return ModelState(params, first.num_classes, first.num_features, round_produced)


def predict(model: ModelState, x: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(logits(model.params, x, model.num_classes), axis=1)


def evaluate(model: ModelState, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        raise ValueError("test split is empty")
    return float(np.mean(predict(model, x) == y))


def staleness_weight(staleness: int, alpha_base: float = 0.6) -> float:
    return alpha_base * (staleness + 1) ** -0.5


def fedasync_merge(
    global_model: ModelState,
    update: ModelState,
    staleness: int,
    alpha_base: float = 0.6,
    round_produced: int = 0,
) -> ModelState:
    """Mix a (possibly stale) client model into the global model."""
    if staleness < 0:
        raise ValueError("staleness must be non-negative")
    if not 0 < alpha_base <= 1:
        raise ValueError("alpha_base must lie in (0, 1]")
    alpha = staleness_weight(staleness, alpha_base)
    params = (1.0 - alpha) * global_model.params + alpha * update.params
    return ModelState(params, global_model.num_classes, global_model.num_features, round_produced)


def save_checkpoint(model: ModelState, path: str | Path) -> None:
    """Write a 16-byte header followed by little-endian float64 parameters."""
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, model.num_classes, model.num_features)
    Path(path).write_bytes(header + model.params.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> ModelState:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError("checkpoint truncated")
    magic, version, k, d = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    params = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(float)
    if len(params) != num_params(k, d):
        raise ValueError("checkpoint length does not match its header")
    return ModelState(params, k, d)
