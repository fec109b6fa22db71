"""Server-side simulation: client sampling, FedAvg and FedAdam aggregation,
the round loop with central evaluation, and the centralized / isolated
baselines it is benchmarked against.

Determinism contract: all randomness flows through keyed streams, client
updates are reduced in client-id order, and local training of the sampled
clients may run in parallel without changing any output byte.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datagen import EmbeddingDataset, PartitionSpec, rng_stream
from .learner import HeadParams, LocalTrainConfig, evaluate, local_train

STRATEGIES = ("fedavg", "fedadam")


@dataclass(frozen=True)
class FedConfig:
    num_clients: int
    participation: float
    rounds: int
    alpha: float
    local: LocalTrainConfig
    strategy: str = "fedavg"
    server_lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if not 0.0 < self.participation <= 1.0:
            raise ValueError("participation must lie in (0, 1]")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.server_lr <= 0:
            raise ValueError("server_lr must be positive")
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class ServerOptState:
    """Adam moments, shaped like the head parameters."""

    m: HeadParams
    v: HeadParams

    @classmethod
    def initial(cls, num_classes: int, dim: int, tau: float) -> "ServerOptState":
        # m starts at zero; v starts at tau^2 so the first step magnitude is
        # bounded even for large pseudo-gradients.
        return cls(
            m=HeadParams.zeros(num_classes, dim),
            v=HeadParams(np.full((num_classes, dim), tau * tau), np.full(num_classes, tau * tau)),
        )


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    participants: tuple[int, ...]
    test_accuracy: float
    test_loss: float
    params_transmitted: int


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def sample_clients(num_clients: int, fraction: float, rng: np.random.Generator) -> list[int]:
    """Uniform sample without replacement of round(fraction * num_clients)
    distinct client ids, returned sorted."""
    count = round_half_up(fraction * num_clients)
    if count < 1 or count > num_clients:
        raise ValueError(f"participation {fraction} rounds to {count} of {num_clients} clients")
    return sorted(int(c) for c in rng.choice(num_clients, size=count, replace=False))


def _check_updates(updates: Sequence[tuple[HeadParams, int]]) -> tuple[int, int]:
    if not updates:
        raise ValueError("no client updates to aggregate")
    num_classes, dim = updates[0][0].num_classes, updates[0][0].dim
    for params, n in updates:
        if (params.num_classes, params.dim) != (num_classes, dim):
            raise ValueError("client updates have inconsistent shapes")
        if n < 0:
            raise ValueError("sample counts must be non-negative")
    if sum(n for _, n in updates) <= 0:
        raise ValueError("total sample count across updates must be positive")
    return num_classes, dim


def fedavg_aggregate(updates: Sequence[tuple[HeadParams, int]]) -> HeadParams:
    """Data-weighted average of client parameters.

    Computed anchored at the first update, x_0 + sum_k w_k (x_k - x_0), which
    is the same convex combination but rounds against the client spread
    instead of the parameter magnitude; aggregating identical parameters
    returns them bit-exactly.
    """
    num_classes, dim = _check_updates(updates)
    total = sum(n for _, n in updates)
    anchor = updates[0][0].flat()
    flat = anchor + sum(
        ((params.flat() - anchor) * (n / total) for params, n in updates),
        np.zeros_like(anchor),
    )
    return HeadParams.from_flat(flat, num_classes, dim)


def fedadam_step(
    state: ServerOptState,
    current: HeadParams,
    updates: Sequence[tuple[HeadParams, int]],
    server_lr: float = 0.1,
    beta1: float = 0.9,
    beta2: float = 0.99,
    tau: float = 1e-3,
) -> tuple[HeadParams, ServerOptState]:
    """One server-side Adam step on the weighted mean pseudo-gradient
    delta = sum_k w_k (x_k - x_t), without bias correction:

        m <- beta1 m + (1 - beta1) delta
        v <- beta2 v + (1 - beta2) delta^2
        x <- x + server_lr * m / (sqrt(v) + tau)
    """
    num_classes, dim = _check_updates(updates)
    if (num_classes, dim) != (current.num_classes, current.dim):
        raise ValueError("updates do not match the global parameter shape")
    total = sum(n for _, n in updates)
    x = current.flat()
    delta = sum(((params.flat() - x) * (n / total) for params, n in updates), np.zeros_like(x))
    m = beta1 * state.m.flat() + (1.0 - beta1) * delta
    v = beta2 * state.v.flat() + (1.0 - beta2) * delta * delta
    new_x = x + server_lr * m / (np.sqrt(v) + tau)
    return (
        HeadParams.from_flat(new_x, num_classes, dim),
        ServerOptState(
            m=HeadParams.from_flat(m, num_classes, dim),
            v=HeadParams.from_flat(v, num_classes, dim),
        ),
    )


def _client_shards(train: EmbeddingDataset, partition: PartitionSpec) -> list[EmbeddingDataset]:
    if len(partition.assignment) != len(train):
        raise ValueError("partition does not cover the training set")
    shards = [train.subset(partition.client_indices(k)) for k in range(partition.num_clients)]
    for k, shard in enumerate(shards):
        if len(shard) == 0:
            raise ValueError(f"client {k} has an empty shard")
    return shards


def run_federated(
    cfg: FedConfig,
    train: EmbeddingDataset,
    partition: PartitionSpec,
    test: EmbeddingDataset,
    workers: int = 1,
    checkpoint_hook=None,
) -> list[RoundMetrics]:
    """Full round loop: sample clients, train locally from the broadcast
    global parameters, aggregate per strategy, evaluate centrally.

    ``checkpoint_hook(round_index, params)`` is called after each round when
    given. Each round accounts 2 * |participants| * (C*d + C) transmitted
    parameters (broadcast down plus updates up).
    """
    if partition.num_clients != cfg.num_clients:
        raise ValueError("partition num_clients does not match the federation config")
    if len(test) == 0:
        raise ValueError("test set must be non-empty")
    if (train.dim, train.num_classes) != (test.dim, test.num_classes):
        raise ValueError("train and test sets disagree on dimensions or classes")
    shards = _client_shards(train, partition)

    params = HeadParams.zeros(train.num_classes, train.dim)
    state = ServerOptState.initial(train.num_classes, train.dim, cfg.tau)
    metrics: list[RoundMetrics] = []
    for round_index in range(1, cfg.rounds + 1):
        sample_rng = rng_stream(cfg.seed, "client-sample", round_index=round_index)
        participants = sample_clients(cfg.num_clients, cfg.participation, sample_rng)

        def train_one(client: int, broadcast: HeadParams = params) -> tuple[HeadParams, int]:
            rng = rng_stream(cfg.seed, "local-shuffle", client=client, round_index=round_index)
            updated = local_train(broadcast, shards[client], cfg.local, rng)
            return updated, len(shards[client])

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                updates = list(pool.map(train_one, participants))
        else:
            updates = [train_one(client) for client in participants]

        if cfg.strategy == "fedavg":
            params = fedavg_aggregate(updates)
        else:
            params, state = fedadam_step(
                state, params, updates,
                server_lr=cfg.server_lr, beta1=cfg.beta1, beta2=cfg.beta2, tau=cfg.tau,
            )
        accuracy, loss = evaluate(params, test)
        metrics.append(
            RoundMetrics(
                round=round_index,
                participants=tuple(participants),
                test_accuracy=accuracy,
                test_loss=loss,
                params_transmitted=2 * len(participants) * params.size,
            )
        )
        if checkpoint_hook is not None:
            checkpoint_hook(round_index, params)
    return metrics


def run_centralized(
    train: EmbeddingDataset,
    test: EmbeddingDataset,
    epochs: int,
    local: LocalTrainConfig,
    seed: int = 0,
) -> list[RoundMetrics]:
    """Single learner on the full training set; one metrics row per epoch,
    starting with the untrained round-0 baseline."""
    if len(train) == 0 or len(test) == 0:
        raise ValueError("train and test sets must be non-empty")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    params = HeadParams.zeros(train.num_classes, train.dim)
    per_epoch = LocalTrainConfig(epochs=1, batch_size=local.batch_size, client_lr=local.client_lr)
    metrics = []
    accuracy, loss = evaluate(params, test)
    metrics.append(RoundMetrics(0, (), accuracy, loss, 0))
    for epoch in range(1, epochs + 1):
        rng = rng_stream(seed, "centralized", round_index=epoch)
        params = local_train(params, train, per_epoch, rng)
        accuracy, loss = evaluate(params, test)
        metrics.append(RoundMetrics(epoch, (), accuracy, loss, 0))
    return metrics


@dataclass(frozen=True)
class IsolatedResult:
    per_client: list[tuple[int, int, float, float]]  # (client, shard size, accuracy, loss)
    mean_accuracy: float
    std_accuracy: float


def run_isolated(
    train: EmbeddingDataset,
    partition: PartitionSpec,
    test: EmbeddingDataset,
    epochs: int,
    local: LocalTrainConfig,
    seed: int = 0,
    workers: int = 1,
) -> IsolatedResult:
    """Every client trains alone on its shard for ``epochs`` epochs and is
    evaluated on the shared global test set. The summary reports the mean and
    population standard deviation of the final accuracies."""
    if len(test) == 0:
        raise ValueError("test set must be non-empty")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    shards = _client_shards(train, partition)
    cfg = LocalTrainConfig(epochs=epochs, batch_size=local.batch_size, client_lr=local.client_lr)

    def train_one(client: int) -> tuple[int, int, float, float]:
        rng = rng_stream(seed, "isolated", client=client)
        params = local_train(HeadParams.zeros(train.num_classes, train.dim), shards[client], cfg, rng)
        accuracy, loss = evaluate(params, test)
        return client, len(shards[client]), accuracy, loss

    clients = list(range(partition.num_clients))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_client = list(pool.map(train_one, clients))
    else:
        per_client = [train_one(client) for client in clients]

    finals = np.array([acc for _, _, acc, _ in per_client])
    return IsolatedResult(
        per_client=per_client,
        mean_accuracy=float(finals.mean()),
        std_accuracy=float(finals.std()),
    )
