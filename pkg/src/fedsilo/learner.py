"""Linear softmax classification head over fixed embeddings.

This is the full unit of trainable state in the simulator: a (C, d) weight
matrix plus a length-C bias, trained with mini-batch SGD on cross-entropy.
Parameters flatten to a vector of length C*d + C (weights row-major, then
bias), which is also the serialization and aggregation order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datagen import EmbeddingDataset


@dataclass(frozen=True)
class HeadParams:
    """Classification-head weights (C, d) and bias (C,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise ValueError("weights must be (C, d) with a matching length-C bias")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise ValueError("head parameters must be finite")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @classmethod
    def zeros(cls, num_classes: int, dim: int) -> "HeadParams":
        return cls(np.zeros((num_classes, dim)), np.zeros(num_classes))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def size(self) -> int:
        """Flattened length C*d + C: the per-transfer parameter count."""
        return self.weights.size + self.bias.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.bias])

    @classmethod
    def from_flat(cls, vec: np.ndarray, num_classes: int, dim: int) -> "HeadParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (num_classes * dim + num_classes,):
            raise ValueError(f"expected a flat vector of length {num_classes * dim + num_classes}")
        return cls(vec[: num_classes * dim].reshape(num_classes, dim), vec[num_classes * dim :])

    def __add__(self, other: "HeadParams") -> "HeadParams":
        return HeadParams(self.weights + other.weights, self.bias + other.bias)

    def __sub__(self, other: "HeadParams") -> "HeadParams":
        return HeadParams(self.weights - other.weights, self.bias - other.bias)

    def scale(self, factor: float) -> "HeadParams":
        return HeadParams(self.weights * factor, self.bias * factor)


@dataclass(frozen=True)
class LocalTrainConfig:
    epochs: int
    batch_size: int
    client_lr: float

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not np.isfinite(self.client_lr) or self.client_lr < 0:
            raise ValueError("client_lr must be finite and non-negative")


def _logits(params: HeadParams, features: np.ndarray) -> np.ndarray:
    return features @ params.weights.T + params.bias


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(params: HeadParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities softmax(Wx + b), stable for large logits."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.dim,):
        raise ValueError(f"expected a feature vector of length {params.dim}, got shape {x.shape}")
    return np.exp(_log_softmax(_logits(params, x[None, :])))[0]


def loss_and_grad(
    params: HeadParams,
    features: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, HeadParams]:
    """Mean cross-entropy over the batch and its exact gradient.

    grad_W = (1/B) sum_i (softmax(W x_i + b) - onehot(y_i)) x_i^T, grad_b the
    analogous row sums.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("batch must be a non-empty (B, d) array")
    if features.shape[1] != params.dim or labels.shape != (features.shape[0],):
        raise ValueError("batch dimensions do not match the head parameters")
    batch = features.shape[0]
    log_probs = _log_softmax(_logits(params, features))
    loss = -log_probs[np.arange(batch), labels].mean()
    delta = np.exp(log_probs)
    delta[np.arange(batch), labels] -= 1.0
    delta /= batch
    return float(loss), HeadParams(delta.T @ features, delta.sum(axis=0))


def local_train(
    params: HeadParams,
    shard: EmbeddingDataset,
    cfg: LocalTrainConfig,
    rng: np.random.Generator,
) -> HeadParams:
    """Mini-batch SGD for ``cfg.epochs`` epochs; reshuffles each epoch and
    includes the final partial batch. Returns a new value, input untouched."""
    if len(shard) == 0:
        raise ValueError("cannot train on an empty shard")
    current = HeadParams(params.weights.copy(), params.bias.copy())
    for _ in range(cfg.epochs):
        order = rng.permutation(len(shard))
        for start in range(0, len(shard), cfg.batch_size):
            # the shuffle decides batch membership; sorting keeps the
            # reduction order canonical (full-batch == plain GD, bit-exact)
            batch = np.sort(order[start : start + cfg.batch_size])
            _, grad = loss_and_grad(current, shard.features[batch], shard.labels[batch])
            current = current - grad.scale(cfg.client_lr)
    return current


def evaluate(params: HeadParams, ds: EmbeddingDataset) -> tuple[float, float]:
    """(accuracy, mean loss) on the full dataset; argmax ties resolve to the
    lowest class index."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if ds.dim != params.dim or ds.num_classes > params.num_classes:
        raise ValueError("dataset dimensions do not match the head parameters")
    log_probs = _log_softmax(_logits(params, ds.features))
    predictions = log_probs.argmax(axis=1)
    accuracy = float((predictions == ds.labels).mean())
    loss = float(-log_probs[np.arange(len(ds)), ds.labels].mean())
    return accuracy, loss


def save_params(params: HeadParams, path: str | Path) -> None:
    """Deterministic CSV checkpoint: a shape row, then one flattened value per
    line in repr form (bit-exact round trip)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["num_classes", "dim"])
        writer.writerow([params.num_classes, params.dim])
        for value in params.flat():
            writer.writerow([repr(float(value))])


def load_params(path: str | Path) -> HeadParams:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["num_classes", "dim"]:
            raise ValueError(f"{path}:1: expected header num_classes,dim")
        try:
            shape_row = next(reader)
            num_classes, dim = int(shape_row[0]), int(shape_row[1])
            values = [float(next(iter(row))) for row in reader]
        except (StopIteration, ValueError, IndexError) as exc:
            raise ValueError(f"{path}: malformed checkpoint: {exc}") from exc
    return HeadParams.from_flat(np.array(values), num_classes, dim)
