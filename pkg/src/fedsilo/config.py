"""Experiment configuration: a YAML document with data / partition / local /
federation sections, validated field by field before any work starts.

Paths inside the config resolve relative to the config file's directory.
The fully resolved config (defaults included) is echoed as JSON into every
run's output directory so results can be reproduced bit for bit.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .federation import STRATEGIES, FedConfig
from .learner import LocalTrainConfig


class ConfigError(ValueError):
    """Invalid or missing configuration value; ``field`` names the culprit."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"config field {field!r}: {message}")
        self.field = field


@dataclass(frozen=True)
class DataSection:
    kind: str = "synthetic"            # "synthetic" or "embeddings"
    num_classes: int = 4
    dim: int = 64
    num_samples: int = 8000
    separation: float = 3.0
    embeddings_path: str | None = None
    test_fraction: float = 0.2


@dataclass(frozen=True)
class PartitionSection:
    num_clients: int = 10
    alpha: float = 0.5
    seed: int = 7                      # master seed for the whole experiment


@dataclass(frozen=True)
class FederationSection:
    strategy: str = "fedavg"
    rounds: int = 10
    participation: float = 0.5
    server_lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSection
    partition: PartitionSection
    local: LocalTrainConfig
    federation: FederationSection
    output_dir: str

    def fed_config(self, seed: int, rounds: int | None = None) -> FedConfig:
        return FedConfig(
            num_clients=self.partition.num_clients,
            participation=self.federation.participation,
            rounds=self.federation.rounds if rounds is None else rounds,
            alpha=self.partition.alpha,
            local=self.local,
            strategy=self.federation.strategy,
            server_lr=self.federation.server_lr,
            beta1=self.federation.beta1,
            beta2=self.federation.beta2,
            tau=self.federation.tau,
            seed=seed,
        )

    def resolved(self) -> dict:
        """Full config echo, defaults included."""
        return {
            "data": {
                "kind": self.data.kind,
                "num_classes": self.data.num_classes,
                "dim": self.data.dim,
                "num_samples": self.data.num_samples,
                "separation": self.data.separation,
                "embeddings_path": self.data.embeddings_path,
                "test_fraction": self.data.test_fraction,
            },
            "partition": {
                "num_clients": self.partition.num_clients,
                "alpha": self.partition.alpha,
                "seed": self.partition.seed,
            },
            "local": {
                "epochs": self.local.epochs,
                "batch_size": self.local.batch_size,
                "client_lr": self.local.client_lr,
            },
            "federation": {
                "strategy": self.federation.strategy,
                "rounds": self.federation.rounds,
                "participation": self.federation.participation,
                "server_lr": self.federation.server_lr,
                "beta1": self.federation.beta1,
                "beta2": self.federation.beta2,
                "tau": self.federation.tau,
            },
            "output_dir": self.output_dir,
        }


def _section(doc: dict, name: str, allowed: set[str]) -> dict:
    raw = doc.get(name, {})
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(name, "must be a mapping")
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{name}.{key}", "unknown key")
    return raw


def _typed(section: str, raw: dict, key: str, kind, default):
    value = raw.get(key, default)
    if value is None:
        return None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(f"{section}.{key}", f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _require(condition: bool, field: str, message: str) -> None:
    if not condition:
        raise ConfigError(field, message)


def config_from_dict(doc: dict, base_dir: Path) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config document must be a mapping")
    known = {"data", "partition", "local", "federation", "output_dir"}
    for key in doc:
        if key not in known:
            raise ConfigError(key, "unknown top-level key")

    raw = _section(doc, "data", {"kind", "num_classes", "dim", "num_samples", "separation",
                                 "embeddings_path", "test_fraction"})
    data = DataSection(
        kind=_typed("data", raw, "kind", str, "synthetic"),
        num_classes=_typed("data", raw, "num_classes", int, 4),
        dim=_typed("data", raw, "dim", int, 64),
        num_samples=_typed("data", raw, "num_samples", int, 8000),
        separation=_typed("data", raw, "separation", float, 3.0),
        embeddings_path=_typed("data", raw, "embeddings_path", str, None),
        test_fraction=_typed("data", raw, "test_fraction", float, 0.2),
    )
    _require(data.kind in ("synthetic", "embeddings"), "data.kind",
             "must be 'synthetic' or 'embeddings'")
    _require(data.num_classes >= 2, "data.num_classes", "must be >= 2")
    _require(0.0 < data.test_fraction < 1.0, "data.test_fraction", "must lie in (0, 1)")
    if data.kind == "synthetic":
        _require(data.dim >= data.num_classes, "data.dim", "must be >= num_classes")
        _require(data.num_samples >= data.num_classes, "data.num_samples",
                 "must be >= num_classes")
        _require(np.isfinite(data.separation) and data.separation >= 0, "data.separation",
                 "must be finite and >= 0")
    else:
        _require(data.embeddings_path is not None, "data.embeddings_path",
                 "required when kind is 'embeddings'")
        resolved_path = (base_dir / data.embeddings_path).resolve()
        _require(resolved_path.is_file(), "data.embeddings_path",
                 f"file not found: {resolved_path}")
        data = dataclasses.replace(data, embeddings_path=str(resolved_path))

    raw = _section(doc, "partition", {"num_clients", "alpha", "seed"})
    partition = PartitionSection(
        num_clients=_typed("partition", raw, "num_clients", int, 10),
        alpha=_typed("partition", raw, "alpha", float, 0.5),
        seed=_typed("partition", raw, "seed", int, 7),
    )
    _require(partition.num_clients >= 1, "partition.num_clients", "must be >= 1")
    _require(partition.alpha > 0, "partition.alpha", "must be positive")
    _require(partition.seed >= 0, "partition.seed", "must be non-negative")

    raw = _section(doc, "local", {"epochs", "batch_size", "client_lr"})
    epochs = _typed("local", raw, "epochs", int, 1)
    batch_size = _typed("local", raw, "batch_size", int, 64)
    client_lr = _typed("local", raw, "client_lr", float, 0.05)
    _require(epochs >= 1, "local.epochs", "must be >= 1")
    _require(batch_size >= 1, "local.batch_size", "must be >= 1")
    _require(np.isfinite(client_lr) and client_lr > 0, "local.client_lr", "must be positive")
    local = LocalTrainConfig(epochs=epochs, batch_size=batch_size, client_lr=client_lr)

    raw = _section(doc, "federation", {"strategy", "rounds", "participation", "server_lr",
                                       "beta1", "beta2", "tau"})
    federation = FederationSection(
        strategy=_typed("federation", raw, "strategy", str, "fedavg"),
        rounds=_typed("federation", raw, "rounds", int, 10),
        participation=_typed("federation", raw, "participation", float, 0.5),
        server_lr=_typed("federation", raw, "server_lr", float, 0.1),
        beta1=_typed("federation", raw, "beta1", float, 0.9),
        beta2=_typed("federation", raw, "beta2", float, 0.99),
        tau=_typed("federation", raw, "tau", float, 1e-3),
    )
    _require(federation.strategy in STRATEGIES, "federation.strategy",
             f"must be one of {STRATEGIES}")
    _require(federation.rounds >= 1, "federation.rounds", "must be >= 1")
    _require(0.0 < federation.participation <= 1.0, "federation.participation",
             "must lie in (0, 1]")
    count = int(np.floor(federation.participation * partition.num_clients + 0.5))
    _require(count >= 1, "federation.participation",
             f"rounds to zero participants out of {partition.num_clients} clients")
    _require(federation.server_lr > 0, "federation.server_lr", "must be positive")
    _require(0.0 < federation.beta1 < 1.0, "federation.beta1", "must lie in (0, 1)")
    _require(0.0 < federation.beta2 < 1.0, "federation.beta2", "must lie in (0, 1)")
    _require(federation.tau > 0, "federation.tau", "must be positive")

    output_dir = doc.get("output_dir", "runs")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir", "must be a string path")
    return ExperimentConfig(
        data=data,
        partition=partition,
        local=local,
        federation=federation,
        output_dir=str((base_dir / output_dir).resolve()),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("<config>", f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError("<config>", f"invalid YAML: {exc}") from exc
    return config_from_dict(doc if doc is not None else {}, path.parent)
