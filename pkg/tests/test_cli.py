import csv
import json

import numpy as np
import yaml
from PIL import Image

from fedsilo.cli import main
from fedsilo.curation import read_manifest
from fedsilo.synthcorpus import build_planted_corpus, smooth_gray_image
from fedsilo.datagen import rng_stream


def _write_config(tmp_path, **overrides):
    doc = {
        "data": {"kind": "synthetic", "num_classes": 4, "dim": 8, "num_samples": 400,
                 "separation": 3.0, "test_fraction": 0.25},
        "partition": {"num_clients": 5, "alpha": 0.5, "seed": 3},
        "local": {"epochs": 1, "batch_size": 32, "client_lr": 0.1},
        "federation": {"strategy": "fedavg", "rounds": 3, "participation": 0.6},
        "output_dir": "out",
    }
    for section, values in overrides.items():
        if isinstance(values, dict):
            doc.setdefault(section, {}).update(values)
        else:
            doc[section] = values
    path = tmp_path / "experiment.yaml"
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ------------------------------------------------------------------ dedup ----

def test_dedup_planted_corpus(tmp_path, capsys):
    corpus = build_planted_corpus(tmp_path / "raw", num_originals=12, num_duplicates=4,
                                  num_conflicts=1, seed=0, size=128)
    out = tmp_path / "dedup"
    code = main(["dedup", "--root", f"{corpus.root}=demo", "--threshold", "5",
                 "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["total_raw"] == 16
    # 3 clean pairs lose the copy, the conflict pair is dropped wholesale
    assert report["duplicates_removed"] == 5
    assert report["conflict_groups"] == 1
    assert report["unique_remaining"] == 11
    manifest = read_manifest(out / "manifest.csv")
    assert len(manifest) == 11
    conflict_orig, conflict_copy = corpus.conflict_pairs[0]
    ids = {r.id for r in manifest}
    assert f"demo:{conflict_orig}" not in ids and f"demo:{conflict_copy}" not in ids
    assert "duplicates removed" in capsys.readouterr().out


def test_dedup_empty_directory_succeeds(tmp_path):
    empty = tmp_path / "empty"
    (empty / "Healthy").mkdir(parents=True)
    out = tmp_path / "out"
    assert main(["dedup", "--root", str(empty), "--out", str(out)]) == 0
    assert (out / "manifest.csv").read_text().startswith("id,source,path")
    assert json.loads((out / "report.json").read_text())["total_raw"] == 0


def test_dedup_threshold_zero_only_exact_copies(tmp_path):
    root = tmp_path / "raw"
    (root / "Healthy").mkdir(parents=True)
    img = smooth_gray_image(rng_stream(0, "cli-t0", client=0), size=128)
    Image.fromarray(img, mode="L").save(root / "Healthy" / "a.png")
    Image.fromarray(img, mode="L").save(root / "Healthy" / "a_copy.png")  # byte-identical content
    other = smooth_gray_image(rng_stream(0, "cli-t0", client=1), size=128)
    Image.fromarray(other, mode="L").save(root / "Healthy" / "b.png")
    from fedsilo.hashing import resize_bilinear
    near = np.round(resize_bilinear(other.astype(float), 64, 64)).astype(np.uint8)
    Image.fromarray(near, mode="L").save(root / "Healthy" / "b_small.png")  # near-dup only
    out = tmp_path / "out"
    assert main(["dedup", "--root", str(root), "--threshold", "0", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["duplicates_removed"] == 1


def test_dedup_missing_root_is_usage_error(tmp_path):
    assert main(["dedup", "--root", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2


def test_dedup_coco_input(tmp_path):
    images = tmp_path / "imgs"
    images.mkdir()
    img = smooth_gray_image(rng_stream(1, "coco-cli"), size=64)
    Image.fromarray(img, mode="L").save(images / "scene.png")
    manifest = tmp_path / "boxes.json"
    manifest.write_text(json.dumps({
        "images": [{"id": 1, "file_name": "scene.png", "width": 64, "height": 64}],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 32, 32]},
            {"id": 2, "image_id": 1, "category_id": 1, "bbox": [32, 32, 30, 30]},
        ],
        "categories": [{"id": 1, "name": "Coccidiosis"}],
    }), encoding="utf-8")
    out = tmp_path / "out"
    assert main(["dedup", "--coco", f"{manifest}={images}", "--out", str(out)]) == 0
    records = read_manifest(out / "manifest.csv")
    assert len(records) == 2
    assert all(r.source == "boxes" for r in records)


# -------------------------------------------------------------------- run ----

def test_run_federated_byte_identical(tmp_path):
    cfg = _write_config(tmp_path)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["run", "--config", str(cfg), "--paradigm", "federated", "--out", str(out1)]) == 0
    assert main(["run", "--config", str(cfg), "--paradigm", "federated", "--out", str(out2)]) == 0
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
    rows = _read_rows(out1 / "metrics.csv")
    assert rows[0] == ["round", "strategy", "participants", "test_accuracy", "test_loss",
                       "params_transmitted"]
    assert len(rows) == 4  # header + 3 rounds
    assert rows[1][1] == "fedavg" and rows[1][2] == "3"  # round(0.6 * 5) participants


def test_run_summary_matches_last_row(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--paradigm", "federated", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    rows = _read_rows(out / "metrics.csv")
    assert summary["summary"]["3"]["final_accuracy"] == float(rows[-1][3])
    assert summary["config"]["federation"]["rounds"] == 3
    assert summary["config"]["federation"]["beta1"] == 0.9  # defaulted value echoed
    assert summary["paradigm"] == "federated"
    assert summary["wall_clock_seconds"] > 0


def test_run_centralized_rows(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "cent"
    assert main(["run", "--config", str(cfg), "--paradigm", "centralized", "--out", str(out)]) == 0
    rows = _read_rows(out / "metrics.csv")
    assert [r[0] for r in rows[1:]] == ["0", "1", "2", "3"]
    assert all(r[1] == "centralized" and r[5] == "0" for r in rows[1:])


def test_run_isolated_summary(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "iso"
    assert main(["run", "--config", str(cfg), "--paradigm", "isolated", "--out", str(out)]) == 0
    rows = _read_rows(out / "metrics.csv")
    assert rows[0] == ["client", "n_samples", "accuracy", "loss"]
    assert len(rows) == 6  # header + 5 clients
    summary = json.loads((out / "summary.json").read_text())["summary"]["3"]
    finals = [float(r[2]) for r in rows[1:]]
    assert summary["mean_accuracy"] == float(np.mean(finals))
    assert summary["std_accuracy"] == float(np.std(finals))


def test_run_seeds_flag_appends_column(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "seeds"
    assert main(["run", "--config", str(cfg), "--paradigm", "federated",
                 "--seeds", "1,2", "--out", str(out)]) == 0
    rows = _read_rows(out / "metrics.csv")
    assert rows[0][-1] == "seed"
    assert {r[-1] for r in rows[1:]} == {"1", "2"}
    assert len(rows) == 7  # header + 3 rounds x 2 seeds


def test_run_federated_checkpoints(tmp_path):
    from fedsilo.learner import load_params

    cfg = _write_config(tmp_path)
    out = tmp_path / "ckpt"
    assert main(["run", "--config", str(cfg), "--paradigm", "federated",
                 "--checkpoint", "--out", str(out)]) == 0
    files = sorted((out / "checkpoints").iterdir())
    assert [f.name for f in files] == [f"seed3_round{r:04d}.csv" for r in (1, 2, 3)]
    params = load_params(files[-1])
    assert (params.num_classes, params.dim) == (4, 8)


def test_run_checkpoint_requires_federated(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    assert main(["run", "--config", str(cfg), "--paradigm", "centralized",
                 "--checkpoint", "--out", str(tmp_path / "x")]) == 2
    assert "--checkpoint" in capsys.readouterr().err


def test_run_workers_do_not_change_bytes(tmp_path):
    cfg = _write_config(tmp_path)
    out1, out2 = tmp_path / "w1", tmp_path / "w2"
    assert main(["run", "--config", str(cfg), "--paradigm", "federated", "--out", str(out1)]) == 0
    assert main(["run", "--config", str(cfg), "--paradigm", "federated", "--out", str(out2),
                 "--workers", "4"]) == 0
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()


def test_run_invalid_config_names_field(tmp_path, capsys):
    cfg = _write_config(tmp_path, federation={"participation": 2.0})
    assert main(["run", "--config", str(cfg), "--paradigm", "federated",
                 "--out", str(tmp_path / "x")]) == 2
    assert "federation.participation" in capsys.readouterr().err


def test_run_unknown_config_key_rejected(tmp_path, capsys):
    cfg = _write_config(tmp_path, local={"momentum": 0.9})
    assert main(["run", "--config", str(cfg), "--paradigm", "federated",
                 "--out", str(tmp_path / "x")]) == 2
    assert "local.momentum" in capsys.readouterr().err


def test_run_embeddings_kind(tmp_path):
    from fedsilo.datagen import save_embeddings, synth_embeddings

    emb = tmp_path / "features.csv"
    save_embeddings(synth_embeddings(4, 8, 300, 3.0, seed=0), emb)
    cfg = _write_config(tmp_path, data={"kind": "embeddings", "embeddings_path": "features.csv"})
    out = tmp_path / "emb_run"
    assert main(["run", "--config", str(cfg), "--paradigm", "centralized", "--out", str(out)]) == 0
    assert (out / "metrics.csv").exists()


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.yaml"), "--paradigm", "federated"]) == 2
    assert "not found" in capsys.readouterr().err


def test_usage_error_exit_code(capsys):
    assert main(["run", "--paradigm", "federated"]) == 2  # missing --config
    assert main(["frobnicate"]) == 2


# -------------------------------------------------------------- partition ----

def test_partition_command(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "part"
    assert main(["partition", "--config", str(cfg), "--out", str(out)]) == 0
    rows = _read_rows(out / "partition_seed3.csv")
    assert rows[0] == ["sample_index", "client_id"]
    assert len(rows) == 301  # header + 300 train samples (400 * 0.75)
    counts = _read_rows(out / "client_class_counts_seed3.csv")
    total = sum(int(r[2]) for r in counts[1:])
    assert total == 300


# ----------------------------------------------------------- ablate-rounds ----

def test_ablate_rounds_rows_and_curves(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "ablate"
    assert main(["ablate-rounds", "--config", str(cfg), "--rounds", "1,2,3",
                 "--out", str(out)]) == 0
    rows = _read_rows(out / "ablation.csv")
    assert rows[0] == ["rounds", "final_accuracy", "final_loss"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    curves = _read_rows(out / "curves.csv")
    assert len(curves) == 4  # header + 3 rounds of the largest budget


def test_ablate_single_round_equals_run(tmp_path):
    cfg = _write_config(tmp_path, federation={"rounds": 1})
    out_a, out_r = tmp_path / "a", tmp_path / "r"
    assert main(["ablate-rounds", "--config", str(cfg), "--rounds", "1", "--out", str(out_a)]) == 0
    assert main(["run", "--config", str(cfg), "--paradigm", "federated", "--out", str(out_r)]) == 0
    ablate_final = _read_rows(out_a / "ablation.csv")[1]
    run_final = _read_rows(out_r / "metrics.csv")[-1]
    assert ablate_final[1] == run_final[3] and ablate_final[2] == run_final[4]


def test_ablate_rejects_descending_rounds(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    assert main(["ablate-rounds", "--config", str(cfg), "--rounds", "5,3",
                 "--out", str(tmp_path / "x")]) == 2
    assert "ascending" in capsys.readouterr().err
