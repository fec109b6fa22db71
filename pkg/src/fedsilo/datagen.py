"""Seeded sampling primitives, Dirichlet non-IID partitioning and synthetic
class-conditional embeddings standing in for frozen-backbone features.

Every random draw flows through a keyed stream (seed, purpose, client, round)
so results are reproducible regardless of evaluation order or parallelism.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


def rng_stream(seed: int, purpose: str, client: int = 0, round_index: int = 0) -> np.random.Generator:
    """Independent generator keyed by (seed, purpose tag, client id, round)."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    tag = zlib.crc32(purpose.encode("utf-8"))
    return np.random.default_rng([seed, tag, client, round_index])


def _mt_gamma(alpha: float, rng: np.random.Generator, n: int) -> np.ndarray:
    # Marsaglia-Tsang squeeze method, valid for alpha >= 1.
    d = alpha - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = n - filled
        z = rng.standard_normal(m)
        u = rng.random(m)
        v = (1.0 + c * z) ** 3
        ok = (v > 0) & (np.log(u) < 0.5 * z * z + d - d * v + d * np.log(np.where(v > 0, v, 1.0)))
        accepted = d * v[ok]
        out[filled : filled + accepted.size] = accepted
        filled += accepted.size
    return out


def gamma_sample(alpha: float, rng: np.random.Generator, size: int | None = None):
    """Draw from Gamma(alpha, 1): Marsaglia-Tsang for alpha >= 1, and the
    boost Gamma(alpha+1) * U^(1/alpha) for alpha < 1."""
    if not np.isfinite(alpha) or alpha <= 0:
        raise ValueError(f"gamma shape must be positive, got {alpha}")
    n = 1 if size is None else int(size)
    if alpha >= 1.0:
        draws = _mt_gamma(alpha, rng, n)
    else:
        draws = _mt_gamma(alpha + 1.0, rng, n) * rng.random(n) ** (1.0 / alpha)
    return float(draws[0]) if size is None else draws


def dirichlet_sample(alpha_vec: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """Probability vector from independent Gamma draws, normalized to sum 1."""
    alphas = np.asarray(alpha_vec, dtype=np.float64)
    if alphas.ndim != 1 or alphas.size < 1:
        raise ValueError("alpha vector must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(alphas)) or np.any(alphas <= 0):
        raise ValueError("all Dirichlet concentrations must be positive")
    while True:
        draws = np.array([gamma_sample(a, rng) for a in alphas])
        total = draws.sum()
        if total > 0:  # guards against all-zero underflow at tiny alpha
            return draws / total


def _largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    raw = proportions * total
    counts = np.floor(raw).astype(int)
    shortfall = total - counts.sum()
    # Distribute the remainder by descending fractional part, ties to the
    # lowest client id.
    order = np.lexsort((np.arange(len(raw)), -(raw - counts)))
    counts[order[:shortfall]] += 1
    return counts


@dataclass(frozen=True)
class PartitionSpec:
    """Assignment of every sample index to one of ``num_clients`` clients."""

    num_clients: int
    alpha: float
    seed: int
    assignment: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.assignment, dtype=int)
        object.__setattr__(self, "assignment", arr)
        if arr.ndim != 1:
            raise ValueError("assignment must be a 1-D index -> client array")
        if arr.size and (arr.min() < 0 or arr.max() >= self.num_clients):
            raise ValueError("client ids must lie in [0, num_clients)")

    def client_indices(self, client: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == client)

    def client_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_clients)


def dirichlet_partition(labels: Sequence[int], num_clients: int, alpha: float, seed: int) -> PartitionSpec:
    """Label-skewed partition: each class's indices are split across clients
    in Dirichlet(alpha) proportions with largest-remainder rounding, then any
    empty client is repaired by moving the lowest index from the largest one."""
    label_arr = np.asarray(labels)
    n = label_arr.size
    if num_clients < 1:
        raise ValueError("num_clients must be >= 1")
    if n < num_clients:
        raise ValueError(f"cannot split {n} samples across {num_clients} clients")

    assignment = np.full(n, -1, dtype=int)
    classes = np.unique(label_arr)
    for position, cls in enumerate(classes):
        rng = rng_stream(seed, "dirichlet-partition", client=position)
        idx = np.flatnonzero(label_arr == cls)
        idx = idx[rng.permutation(idx.size)]
        proportions = dirichlet_sample(np.full(num_clients, float(alpha)), rng)
        counts = _largest_remainder(proportions, idx.size)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        for client in range(num_clients):
            assignment[idx[offsets[client] : offsets[client + 1]]] = client

    sizes = np.bincount(assignment, minlength=num_clients)
    while (sizes == 0).any():
        empty = int(np.flatnonzero(sizes == 0)[0])
        donor = int(np.argmax(sizes))
        moved = int(np.flatnonzero(assignment == donor)[0])
        assignment[moved] = empty
        sizes[donor] -= 1
        sizes[empty] += 1

    return PartitionSpec(num_clients=num_clients, alpha=float(alpha), seed=seed, assignment=assignment)


def save_partition(spec: PartitionSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_index", "client_id"])
        for i, client in enumerate(spec.assignment):
            writer.writerow([i, int(client)])


def load_partition(path: str | Path, num_clients: int, alpha: float = 0.0, seed: int = 0) -> PartitionSpec:
    assignment = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_index", "client_id"]:
            raise ValueError(f"{path}:1: expected header sample_index,client_id")
        for lineno, row in enumerate(reader, start=2):
            try:
                index, client = int(row[0]), int(row[1])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row") from exc
            if index != lineno - 2:
                raise ValueError(f"{path}:{lineno}: sample indices must be contiguous from 0")
            assignment.append(client)
    return PartitionSpec(num_clients=num_clients, alpha=alpha, seed=seed, assignment=np.array(assignment))


@dataclass(frozen=True)
class EmbeddingDataset:
    """Fixed feature vectors with integer labels in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=int)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D (n, dim) array")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must be a 1-D array matching the sample count")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "EmbeddingDataset":
        return EmbeddingDataset(self.features[indices], self.labels[indices], self.num_classes)


def synth_embeddings(
    num_classes: int,
    dim: int,
    num_samples: int,
    separation: float,
    seed: int,
) -> EmbeddingDataset:
    """Gaussian class clusters with orthogonal means ``separation * e_c`` and
    identity covariance; labels are balanced to within one sample."""
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if dim < num_classes:
        raise ValueError("dim must be >= num_classes so class means stay orthogonal")
    if num_samples < num_classes:
        raise ValueError("need at least one sample per class")
    if not np.isfinite(separation) or separation < 0:
        raise ValueError("separation must be a finite non-negative value")
    rng = rng_stream(seed, "synth-embeddings")
    labels = np.arange(num_samples) % num_classes
    labels = labels[rng.permutation(num_samples)]
    features = rng.standard_normal((num_samples, dim))
    features[np.arange(num_samples), labels] += separation
    return EmbeddingDataset(features, labels, num_classes)


def stratified_split(
    ds: EmbeddingDataset,
    test_fraction: float,
    seed: int,
) -> tuple[EmbeddingDataset, EmbeddingDataset]:
    """Per-class shuffled split; each class contributes round(fraction * count)
    samples to the test side. Train and test are disjoint and exhaustive."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    rng = rng_stream(seed, "stratified-split")
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for cls in np.unique(ds.labels):
        idx = np.flatnonzero(ds.labels == cls)
        if idx.size < 2:
            raise ValueError(f"class {cls} has fewer than 2 samples; cannot split")
        idx = idx[rng.permutation(idx.size)]
        n_test = int(np.floor(test_fraction * idx.size + 0.5))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return ds.subset(train), ds.subset(test)


def save_embeddings(ds: EmbeddingDataset, path: str | Path) -> None:
    """CSV with header ``label,f0,...,f{d-1}``; floats use repr so the file
    round-trips bit-exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"f{i}" for i in range(ds.dim)])
        for label, row in zip(ds.labels, ds.features):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def load_embeddings(path: str | Path, num_classes: int | None = None) -> EmbeddingDataset:
    """Parse the embedding CSV; dim comes from the header. When given,
    ``num_classes`` is enforced; otherwise it is inferred as max label + 1."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "label" or header[1:] != [f"f{i}" for i in range(len(header) - 1)]:
            raise ValueError(f"{path}:1: expected header label,f0,...,f{{d-1}}")
        dim = len(header) - 1
        if dim < 1:
            raise ValueError(f"{path}:1: no feature columns")
        labels: list[int] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim + 1} columns, got {len(row)}")
            try:
                label = int(row[0])
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if label < 0 or (num_classes is not None and label >= num_classes):
                raise ValueError(f"{path}:{lineno}: label {label} out of range")
            labels.append(label)
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no samples (header-only file)")
    inferred = max(labels) + 1 if num_classes is None else num_classes
    return EmbeddingDataset(np.array(rows), np.array(labels), inferred)
