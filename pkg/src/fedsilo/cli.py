"""Command-line experiment harness.

Subcommands:
  dedup          scan image roots / COCO manifests, group near-duplicates,
                 write the curated manifest and report
  partition      materialize the Dirichlet client partition as CSV
  run            execute one paradigm: centralized, isolated or federated
  ablate-rounds  repeat the federated run over a list of round budgets

Exit codes: 0 success, 2 usage or config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from . import curation, datagen, federation
from .config import ConfigError, ExperimentConfig, load_config
from .curation import DEFAULT_LABELS
from .datagen import EmbeddingDataset
from .learner import save_params

log = logging.getLogger(__name__)

METRICS_HEADER = ["round", "strategy", "participants", "test_accuracy", "test_loss", "params_transmitted"]
ISOLATED_HEADER = ["client", "n_samples", "accuracy", "loss"]
ABLATION_HEADER = ["rounds", "final_accuracy", "final_loss"]


def _parse_seeds(text: str | None, default: int) -> list[int]:
    if text is None:
        return [default]
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError("--seeds", f"must be a comma-separated list of ints: {exc}") from exc
    if not seeds or any(s < 0 for s in seeds):
        raise ConfigError("--seeds", "must list one or more non-negative ints")
    return seeds


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def _build_dataset(cfg: ExperimentConfig, seed: int) -> EmbeddingDataset:
    if cfg.data.kind == "synthetic":
        return datagen.synth_embeddings(
            num_classes=cfg.data.num_classes,
            dim=cfg.data.dim,
            num_samples=cfg.data.num_samples,
            separation=cfg.data.separation,
            seed=seed,
        )
    return datagen.load_embeddings(cfg.data.embeddings_path, num_classes=cfg.data.num_classes)


def _prepare(cfg: ExperimentConfig, seed: int):
    ds = _build_dataset(cfg, seed)
    train, test = datagen.stratified_split(ds, cfg.data.test_fraction, seed)
    partition = datagen.dirichlet_partition(
        train.labels, cfg.partition.num_clients, cfg.partition.alpha, seed
    )
    return train, test, partition


def _echo(cfg: ExperimentConfig, extra: dict) -> dict:
    doc = {"config": cfg.resolved()}
    doc.update(extra)
    return doc


# ---------------------------------------------------------------- dedup ----

def _parse_root(spec: str) -> tuple[str, str]:
    if "=" in spec:
        path, tag = spec.split("=", 1)
    else:
        path, tag = spec, Path(spec).name
    return path, tag


def cmd_dedup(args: argparse.Namespace) -> int:
    labels = tuple(part.strip() for part in args.labels.split(",") if part.strip())
    if not labels:
        raise ConfigError("--labels", "must list at least one label")
    if args.threshold < 0:
        raise ConfigError("--threshold", "must be non-negative")
    label_rule = {name: name for name in labels}

    records: list[curation.ImageRecord] = []
    roots = [_parse_root(spec) for spec in args.root or []]
    if roots:
        records.extend(curation.scan_corpus(roots, label_rule, workers=args.workers))
    for spec in args.coco or []:
        if "=" not in spec:
            raise ConfigError("--coco", "expected MANIFEST.json=IMAGES_ROOT")
        manifest, images_root = spec.split("=", 1)
        records.extend(
            curation.coco_to_classification(manifest, images_root, source=Path(manifest).stem)
        )
    if not roots and not args.coco:
        raise ConfigError("dedup", "provide at least one --root or --coco input")
    records.sort(key=lambda r: r.id)
    for first, second in zip(records, records[1:]):
        if first.id == second.id:
            raise ValueError(f"duplicate record id {first.id!r} across inputs; use distinct tags")

    groups = curation.group_duplicates(records, threshold=args.threshold)
    conflicts = curation.detect_label_conflicts(groups)
    curated, report = curation.select_representatives(groups, records)

    if report.unique_remaining != len(curated) or \
            report.total_raw - report.duplicates_removed != report.unique_remaining:
        raise RuntimeError("curation report arithmetic identity violated")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    curation.write_manifest(curated, out / "manifest.csv")
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.as_dict() | {"threshold": args.threshold}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    text = curation.render_report(report)
    (out / "report.txt").write_text(text + "\n", encoding="utf-8")
    with open(out / "conflicts.json", "w", encoding="utf-8") as fh:
        json.dump([sorted(g.members) for g in conflicts], fh, indent=2)
        fh.write("\n")
    print(text)
    return 0


# ------------------------------------------------------------- partition ----

def cmd_partition(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    seeds = _parse_seeds(args.seeds, cfg.partition.seed)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    files = []
    for seed in seeds:
        train, _, partition = _prepare(cfg, seed)
        name = f"partition_seed{seed}.csv"
        datagen.save_partition(partition, out / name)
        counts_rows = []
        for client in range(partition.num_clients):
            shard_labels = train.labels[partition.client_indices(client)]
            for cls in range(train.num_classes):
                counts_rows.append([client, cls, int((shard_labels == cls).sum())])
        _write_csv(out / f"client_class_counts_seed{seed}.csv", ["client", "class", "count"], counts_rows)
        files.append(name)

    with open(out / "partition_summary.json", "w", encoding="utf-8") as fh:
        json.dump(_echo(cfg, {"seeds": seeds, "partition_files": files}), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(files)} partition file(s) under {out}")
    return 0


# ------------------------------------------------------------------- run ----

def _run_one(cfg: ExperimentConfig, paradigm: str, seed: int, workers: int,
             checkpoint_dir: Path | None = None):
    train, test, partition = _prepare(cfg, seed)
    if paradigm == "centralized":
        rounds = federation.run_centralized(
            train, test, epochs=cfg.federation.rounds, local=cfg.local, seed=seed
        )
        rows = [[m.round, "centralized", 1, _fmt(m.test_accuracy), _fmt(m.test_loss), 0] for m in rounds]
        summary = {"final_accuracy": rounds[-1].test_accuracy, "final_loss": rounds[-1].test_loss}
        return rows, summary
    if paradigm == "isolated":
        result = federation.run_isolated(
            train, partition, test, epochs=cfg.federation.rounds, local=cfg.local,
            seed=seed, workers=workers,
        )
        rows = [[client, n, _fmt(acc), _fmt(loss)] for client, n, acc, loss in result.per_client]
        summary = {
            "mean_accuracy": result.mean_accuracy,
            "std_accuracy": result.std_accuracy,
            "per_client_accuracy": [acc for _, _, acc, _ in result.per_client],
        }
        return rows, summary
    hook = None
    if checkpoint_dir is not None:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

        def hook(round_index, params, _seed=seed):
            save_params(params, checkpoint_dir / f"seed{_seed}_round{round_index:04d}.csv")

    metrics = federation.run_federated(
        cfg.fed_config(seed), train, partition, test, workers=workers, checkpoint_hook=hook
    )
    rows = [
        [m.round, cfg.federation.strategy, len(m.participants), _fmt(m.test_accuracy),
         _fmt(m.test_loss), m.params_transmitted]
        for m in metrics
    ]
    summary = {"final_accuracy": metrics[-1].test_accuracy, "final_loss": metrics[-1].test_loss}
    return rows, summary


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    seeds = _parse_seeds(args.seeds, cfg.partition.seed)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    checkpoint_dir = out / "checkpoints" if args.checkpoint else None
    if args.checkpoint and args.paradigm != "federated":
        raise ConfigError("--checkpoint", "only supported for the federated paradigm")

    start = time.perf_counter()
    all_rows: list[list] = []
    summaries: dict[str, dict] = {}
    for seed in seeds:
        rows, summary = _run_one(cfg, args.paradigm, seed, args.workers, checkpoint_dir)
        if args.seeds is not None:
            rows = [row + [seed] for row in rows]
        all_rows.extend(rows)
        summaries[str(seed)] = summary
    elapsed = time.perf_counter() - start

    header = ISOLATED_HEADER if args.paradigm == "isolated" else METRICS_HEADER
    if args.seeds is not None:
        header = header + ["seed"]
    metrics_name = "metrics.csv"
    _write_csv(out / metrics_name, header, all_rows)

    result = _echo(cfg, {
        "paradigm": args.paradigm,
        "seeds": seeds,
        "metrics_csv": metrics_name,
        "summary": summaries,
        "wall_clock_seconds": elapsed,
    })
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for seed in seeds:
        line = ", ".join(f"{k}={v:.4f}" for k, v in summaries[str(seed)].items() if isinstance(v, float))
        print(f"{args.paradigm} seed {seed}: {line}")
    return 0


# --------------------------------------------------------- ablate-rounds ----

def cmd_ablate_rounds(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    try:
        rounds_list = [int(part) for part in args.rounds.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError("--rounds", f"must be a comma-separated list of ints: {exc}") from exc
    if not rounds_list or any(r < 1 for r in rounds_list):
        raise ConfigError("--rounds", "must list one or more positive round counts")
    if rounds_list != sorted(rounds_list):
        raise ConfigError("--rounds", "must be ascending")
    seeds = _parse_seeds(args.seeds, cfg.partition.seed)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    summary_rows: list[list] = []
    curve_rows: list[list] = []
    largest = rounds_list[-1]
    for seed in seeds:
        train, test, partition = _prepare(cfg, seed)
        for total_rounds in rounds_list:
            metrics = federation.run_federated(
                cfg.fed_config(seed, rounds=total_rounds), train, partition, test,
                workers=args.workers,
            )
            row = [total_rounds, _fmt(metrics[-1].test_accuracy), _fmt(metrics[-1].test_loss)]
            if args.seeds is not None:
                row.append(seed)
            summary_rows.append(row)
            if total_rounds == largest:
                for m in metrics:
                    crow = [m.round, cfg.federation.strategy, len(m.participants),
                            _fmt(m.test_accuracy), _fmt(m.test_loss), m.params_transmitted]
                    if args.seeds is not None:
                        crow.append(seed)
                    curve_rows.append(crow)
    elapsed = time.perf_counter() - start

    header = list(ABLATION_HEADER)
    curve_header = list(METRICS_HEADER)
    if args.seeds is not None:
        header.append("seed")
        curve_header.append("seed")
    _write_csv(out / "ablation.csv", header, summary_rows)
    _write_csv(out / "curves.csv", curve_header, curve_rows)

    with open(out / "ablation_summary.json", "w", encoding="utf-8") as fh:
        json.dump(_echo(cfg, {
            "rounds": rounds_list,
            "seeds": seeds,
            "ablation_csv": "ablation.csv",
            "curves_csv": "curves.csv",
            "wall_clock_seconds": elapsed,
        }), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for row in summary_rows:
        print(f"T={row[0]}: final_accuracy={row[1]}")
    return 0


# ------------------------------------------------------------------ main ----

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsilo", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dedup", help="deduplicate an image corpus")
    p.add_argument("--root", action="append", metavar="DIR[=TAG]",
                   help="corpus root with label subdirectories; repeatable")
    p.add_argument("--coco", action="append", metavar="MANIFEST=IMAGES_ROOT",
                   help="COCO detection manifest to convert; repeatable")
    p.add_argument("--threshold", type=int, default=5, help="Hamming threshold (default 5)")
    p.add_argument("--labels", default=",".join(DEFAULT_LABELS),
                   help="comma-separated label set (default: %(default)s)")
    p.add_argument("--workers", type=int, default=1, help="hashing threads (default 1)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("partition", help="write the Dirichlet client partition")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", help="comma-separated seeds (default: config seed)")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("run", help="run one training paradigm")
    p.add_argument("--config", required=True)
    p.add_argument("--paradigm", required=True, choices=["centralized", "isolated", "federated"])
    p.add_argument("--seeds", help="comma-separated seeds; adds a seed column")
    p.add_argument("--workers", type=int, default=1, help="client training threads (default 1)")
    p.add_argument("--checkpoint", action="store_true",
                   help="save global head params after every federated round")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate-rounds", help="federated runs over a list of round budgets")
    p.add_argument("--config", required=True)
    p.add_argument("--rounds", required=True, help="ascending comma-separated round counts")
    p.add_argument("--seeds", help="comma-separated seeds; adds a seed column")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_ablate_rounds)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure inside a validated run
        log.debug("unhandled failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
