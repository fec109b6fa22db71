#!/usr/bin/env python3
"""Benchmark the four training paradigms on the synthetic embedding task.

For each seed: centralized upper bound, isolated single-client baseline, and
federated training under both aggregation strategies, all sharing one
Dirichlet partition. Prints a median summary table and optionally a rounds
ablation for the adaptive strategy.
"""

from __future__ import annotations

import argparse

import numpy as np

from fedsilo.datagen import dirichlet_partition, stratified_split, synth_embeddings
from fedsilo.federation import FedConfig, run_centralized, run_federated, run_isolated
from fedsilo.learner import LocalTrainConfig


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seeds")
    parser.add_argument("--classes", type=int, default=4)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--samples", type=int, default=8000)
    parser.add_argument("--separation", type=float, default=2.7)
    parser.add_argument("--clients", type=int, default=10)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--rounds", type=int, default=20)
    parser.add_argument("--participation", type=float, default=0.5)
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--client-lr", type=float, default=0.05)
    parser.add_argument("--server-lr", type=float, default=0.03)
    parser.add_argument("--ablate", action="store_true",
                        help="also report the 5/10/20-round ablation (adaptive strategy)")
    args = parser.parse_args()

    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    local = LocalTrainConfig(epochs=1, batch_size=args.batch_size, client_lr=args.client_lr)
    rows = {k: [] for k in ("centralized", "isolated", "iso_std", "fedavg", "fedadam")}
    ablation = {5: [], 10: [], 20: []}

    for seed in seeds:
        ds = synth_embeddings(args.classes, args.dim, args.samples, args.separation, seed)
        train, test = stratified_split(ds, 0.2, seed)
        partition = dirichlet_partition(train.labels, args.clients, args.alpha, seed)

        cent = run_centralized(train, test, epochs=args.rounds, local=local, seed=seed)
        rows["centralized"].append(cent[-1].test_accuracy)

        iso = run_isolated(train, partition, test, epochs=args.rounds, local=local, seed=seed)
        rows["isolated"].append(iso.mean_accuracy)
        rows["iso_std"].append(iso.std_accuracy)

        base = dict(num_clients=args.clients, participation=args.participation,
                    alpha=args.alpha, local=local, seed=seed)
        metrics = run_federated(FedConfig(strategy="fedavg", rounds=args.rounds, **base),
                                train, partition, test)
        rows["fedavg"].append(metrics[-1].test_accuracy)
        metrics = run_federated(
            FedConfig(strategy="fedadam", server_lr=args.server_lr, rounds=args.rounds, **base),
            train, partition, test,
        )
        rows["fedadam"].append(metrics[-1].test_accuracy)

        if args.ablate:
            for total in (5, 10, 20):
                m = run_federated(
                    FedConfig(strategy="fedadam", server_lr=args.server_lr, rounds=total, **base),
                    train, partition, test,
                )
                ablation[total].append(m[-1].test_accuracy)

    med = lambda v: float(np.median(v))
    print(f"\nsynthetic task: C={args.classes} d={args.dim} n={args.samples} "
          f"s={args.separation}, K={args.clients}, Dir({args.alpha}), "
          f"T={args.rounds}, f={args.participation}, {len(seeds)} seed(s)")
    print(f"{'paradigm':<22} {'median test accuracy'}")
    print("-" * 48)
    print(f"{'centralized':<22} {med(rows['centralized']):.4f}")
    print(f"{'isolated (mean/std)':<22} {med(rows['isolated']):.4f} +/- {med(rows['iso_std']):.4f}")
    print(f"{'federated fedavg':<22} {med(rows['fedavg']):.4f}")
    print(f"{'federated fedadam':<22} {med(rows['fedadam']):.4f}")

    if args.ablate:
        print("\nrounds ablation (fedadam):")
        for total in (5, 10, 20):
            print(f"  T={total:>2}: {med(ablation[total]):.4f}")


if __name__ == "__main__":
    main()
