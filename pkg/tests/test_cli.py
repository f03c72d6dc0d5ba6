import csv
import logging
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from aiosod.cli import main
from aiosod.data.manifest import load_manifest, write_manifest

DESK = ["--set", "train.desk_scale=true"]


def manifests(synthetic):
    out = []
    for p in synthetic.values():
        out += ["--manifest", str(p)]
    return out


def only_run(root, prefix):
    runs = sorted(Path(root).glob(f"{prefix}-*"))
    assert runs, f"no {prefix} run under {root}"
    return runs[-1]


@pytest.fixture(scope="module")
def trained(tmp_path_factory, synthetic):
    out = tmp_path_factory.mktemp("runs")
    code = main(["--out", str(out), "train", *DESK, *manifests(synthetic), "--steps", "50",
                 "--set", "train.checkpoint_every=25"])
    assert code == 0
    return only_run(out, "train")


def test_train_writes_checkpoint_and_log(trained):
    lines = (trained / "train.log").read_text().splitlines()
    assert lines[0] == "step\tmodality\tloss\tlr"
    assert len(lines) == 51
    assert [int(l.split("\t")[0]) for l in lines[1:]] == list(range(50))
    assert (trained / "ckpt-00000050.npz").exists() and (trained / "ckpt-00000025.npz").exists()
    assert "train.desk_scale = true" in (trained / "config.txt").read_text()


def test_train_resume(tmp_path, synthetic):
    args = ["--out", str(tmp_path), "train", *DESK, *manifests(synthetic), "--set", "train.checkpoint_every=5"]
    assert main(args + ["--steps", "5"]) == 0
    run = only_run(tmp_path, "train")
    assert main(args + ["--steps", "10", "--resume", str(run)]) == 0
    assert len((run / "train.log").read_text().splitlines()) == 11
    assert (run / "ckpt-00000010.npz").exists()


def test_missing_manifest_exit_code(tmp_path, capsys):
    missing = tmp_path / "nowhere.tsv"
    assert main(["--out", str(tmp_path), "train", *DESK, "--manifest", str(missing)]) == 2
    err = capsys.readouterr().err
    assert str(missing) in err and len(err.strip().splitlines()) == 1


def test_invalid_config_exit(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "bench", "--set", "model.embed_dim=30"]) == 2
    assert "divisible" in capsys.readouterr().err


def test_eval_outputs_and_byte_identical_rerun(tmp_path, trained, synthetic, records):
    # a ten-image manifest drawn from the synthetic sets
    recs = records["rgb"][:4] + records["rgbd"][:3] + records["rgbt"][:3]
    manifest = tmp_path / "ten.tsv"
    write_manifest(manifest, recs)
    assert len(load_manifest(manifest)) == 10
    ckpt = str(trained / "ckpt-00000050.npz")
    for out in ("a", "b"):
        assert main(["--out", str(tmp_path / out), "eval", "--checkpoint", ckpt, "--manifest", str(manifest)]) == 0
    run_a, run_b = only_run(tmp_path / "a", "eval"), only_run(tmp_path / "b", "eval")
    pngs = sorted(run_a.glob("predictions/*/*.png"))
    assert len(pngs) == 10
    arr = np.asarray(Image.open(pngs[0]))
    assert arr.dtype == np.uint8 and arr.ndim == 2
    files_a = sorted(p.relative_to(run_a) for p in run_a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(run_b) for p in run_b.rglob("*") if p.is_file())
    assert files_a == files_b
    differing = [str(f) for f in files_a if f.name != "config.txt" and (run_a / f).read_bytes() != (run_b / f).read_bytes()]
    assert differing == []
    with open(run_a / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["dataset"] for r in rows} == {"syn-rgb", "syn-rgbd", "syn-rgbt"}
    assert (run_a / "eval.png").stat().st_size > 0


def test_eval_refuses_mismatched_model_config(tmp_path, trained, synthetic, capsys):
    code = main(["--out", str(tmp_path), "eval", "--checkpoint", str(trained / "ckpt-00000050.npz"),
                 "--manifest", str(synthetic["rgb"]), "--set", "model.embed_dim=64"])
    assert code == 2
    assert "model config" in capsys.readouterr().err


def test_predict_both_paths(tmp_path, trained, records, caplog):
    ckpt = str(trained / "ckpt-00000050.npz")
    rec = records["rgbd"][0]
    assert main(["--out", str(tmp_path), "predict", "--checkpoint", ckpt, "--rgb", str(rec.rgb_path),
                 "--aux", str(rec.aux_path), "--output", "paired.png"]) == 0
    assert main(["--out", str(tmp_path), "predict", "--checkpoint", ckpt, "--rgb", str(rec.rgb_path),
                 "--output", "fast.png"]) == 0
    outs = sorted(tmp_path.glob("predict-*/*.png"))
    assert [p.name for p in outs] == ["paired.png", "fast.png"]
    assert Image.open(outs[0]).size == (64, 64)

    small = tmp_path / "small.png"
    Image.fromarray(np.zeros((10, 12), np.uint8)).save(small)
    with caplog.at_level(logging.WARNING):
        assert main(["--out", str(tmp_path), "predict", "--checkpoint", ckpt, "--rgb", str(rec.rgb_path),
                     "--aux", str(small)]) == 0
    assert "resizing" in caplog.text
    assert main(["--out", str(tmp_path), "predict", "--checkpoint", ckpt, "--rgb", "nope.png"]) == 2


def test_bench_desk(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "bench", *DESK]) == 0
    out = capsys.readouterr().out
    assert "flops_rgb < flops_paired: True" in out
    run = only_run(tmp_path, "bench")
    assert (run / "cost.json").exists() and (run / "cost.png").exists()


def test_bench_default_reports_budget(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "bench"]) == 0
    out = capsys.readouterr().out
    total = float(out.split("params total")[1].split()[0])
    assert abs(total - 6.25) / 6.25 <= 0.05


def test_bench_is_bit_exact(tmp_path):
    for out in ("a", "b"):
        assert main(["--out", str(tmp_path / out), "--seed", "4", "bench", *DESK]) == 0
    a, b = only_run(tmp_path / "a", "bench"), only_run(tmp_path / "b", "bench")
    for name in ("cost.json", "report.txt", "cost.png"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_norm_demo_rows(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "norm-demo", *DESK]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("LayerNorm") and out[1].startswith("BatchNorm")
    with open(only_run(tmp_path, "norm-demo") / "norm_interference.csv") as fh:
        rows = {r["norm"]: r for r in csv.DictReader(fh)}
    assert abs(float(rows["layer"]["token_interference"])) <= 1e-5
    assert float(rows["layer"]["backbone_rel_change"]) <= 1e-5
    assert float(rows["batch"]["token_interference"]) > 0
    assert float(rows["batch"]["backbone_rel_change"]) > 0


def test_norm_demo_identical_aux(tmp_path):
    assert main(["--out", str(tmp_path), "norm-demo", *DESK, "--identical-aux"]) == 0
    with open(only_run(tmp_path, "norm-demo") / "norm_interference.csv") as fh:
        for row in csv.DictReader(fh):
            assert float(row["token_interference"]) == 0.0 and float(row["backbone_rel_change"]) == 0.0


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("AIOSOD_OUT", str(tmp_path / "env"))
    assert main(["norm-demo", *DESK]) == 0
    assert only_run(tmp_path / "env", "norm-demo").is_dir()


def test_global_flags_after_subcommand(tmp_path):
    assert main(["norm-demo", "--out", str(tmp_path), "--seed", "3", *DESK]) == 0
    text = (only_run(tmp_path, "norm-demo") / "config.txt").read_text()
    assert "seed = 3" in text
