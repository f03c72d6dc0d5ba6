"""Acceptance criteria. Each test prints one ``[PASS]`` / ``[FAIL]`` line."""

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import torch

import oracles
from aiosod.cli import main
from aiosod.config import ABLATIONS, ModelConfig, desk_scale
from aiosod.data.manifest import load_manifest
from aiosod.metrics.cost import count_flops, count_params, hooked_flops
from aiosod.metrics.saliency import e_measure, mae, max_f_measure, s_measure
from aiosod.model.backbone import T2TBackbone, init_weights
from aiosod.model.network import AiOSOD
from aiosod.model.norms import interference_metric
from aiosod.training.gradcheck import TINY, gradient_check
from aiosod.training.schedule import lr_schedule
from aiosod.training.trainer import overfit


@pytest.fixture()
def verdict(capsys):
    def report(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return report


def within(value, target, tol):
    return abs(value - target) / target <= tol


def test_parameter_budget(verdict):
    c = count_params(AiOSOD(ModelConfig()))
    checks = {
        "total": (c["total"], 6.25e6),
        "backbone": (c["backbone"], 5.31e6),
        "tfm": (c["tfm"], 0.288e6),
        **{f"ffm{i}": (c[f"decoder.{i}"], 0.071e6) for i in range(3)},
        "mffm": (c["mffm"], 0.141e6),
    }
    ok = all(within(v, t, 0.05) for v, t in checks.values())
    detail = ", ".join(f"{k} {v / 1e6:.4f}M ({(v - t) / t:+.2%})" for k, (v, t) in checks.items())
    verdict("parameter budget", ok, detail)


def test_ablation_ladder(verdict):
    targets = {"baseline": 5.80e6, "base+tfm+ffm": 6.10e6, "base+tfm+ffm+mffm": 6.25e6}
    totals = {name: count_params(AiOSOD(replace(ModelConfig(), **ABLATIONS[name])))["total"] for name in targets}
    ordered = list(totals.values()) == sorted(totals.values()) and len(set(totals.values())) == 3
    ok = ordered and all(within(totals[n], t, 0.05) for n, t in targets.items())
    detail = " -> ".join(f"{n} {totals[n] / 1e6:.3f}M ({(totals[n] - t) / t:+.2%})" for n, t in targets.items())
    verdict("ablation ladder", ok, detail)


def test_flops_split(verdict):
    cfg = ModelConfig()
    paired, rgb = count_flops(cfg, "paired"), count_flops(cfg, "rgb")
    model = AiOSOD(cfg)
    x = torch.zeros(1, 3, 224, 224)
    hooks_agree = paired == hooked_flops(model, x, x) and rgb == hooked_flops(model, x)
    ok = within(paired, 3.24e9, 0.10) and within(rgb, 2.04e9, 0.15) and rgb < paired and hooks_agree
    verdict("FLOPs split", ok,
            f"paired {paired / 1e9:.3f}G ({(paired - 3.24e9) / 3.24e9:+.1%}), rgb {rgb / 1e9:.3f}G "
            f"({(rgb - 2.04e9) / 2.04e9:+.1%}), rgb < paired {rgb < paired}, hook count agrees {hooks_agree}")


def _rgb_half_change(norm):
    cfg = replace(ModelConfig(), norm=norm)
    torch.manual_seed(0)
    backbone = T2TBackbone(cfg)
    init_weights(backbone)
    backbone = backbone.double().train()
    g = torch.Generator().manual_seed(0)
    rgb = torch.randn(2, 3, 224, 224, generator=g, dtype=torch.float64)
    aux_a = torch.randn(2, 3, 224, 224, generator=g, dtype=torch.float64)
    aux_b = 3 * torch.randn(2, 3, 224, 224, generator=g, dtype=torch.float64) + 1
    with torch.no_grad():
        fa = backbone(torch.cat([rgb, aux_a]))
        fb = backbone(torch.cat([rgb, aux_b]))
    return max(float((a.values[:2] - b.values[:2]).abs().max() / a.values[:2].abs().max())
               for a, b in zip(fa, fb))


def test_batch_independence(verdict):
    layer = _rgb_half_change("layer")
    rng = np.random.default_rng(0)
    rgb, a, b = rng.normal(size=(4, 16, 32)), rng.normal(size=(4, 16, 32)), rng.normal(size=(4, 16, 32))
    token_bn = interference_metric("batch", rgb, a, b)
    batch = _rgb_half_change("batch")
    ok = layer <= 1e-5 and token_bn > 1e-3 and batch > 1e-3
    verdict("batch independence", ok,
            f"LayerNorm backbone rgb-half rel. change {layer:.2e}; BatchNorm interference {token_bn:.4f}, "
            f"BatchNorm backbone rgb-half rel. change {batch:.3f}")


def test_gradient_correctness(verdict):
    results = gradient_check(TINY, n_scalars=24)
    ok = all(r.checked >= 20 and r.max_rel_err < 1e-4 for r in results)
    verdict("gradient correctness", ok,
            "; ".join(f"{r.submodule} {r.checked} scalars max rel err {r.max_rel_err:.1e}" for r in results))


@pytest.mark.slow
def test_overfit_sanity(verdict, synthetic):
    recs = (load_manifest(synthetic["rgb"])[:3] + load_manifest(synthetic["rgbd"])[:3]
            + load_manifest(synthetic["rgbt"])[:2])
    final, steps, _ = overfit(desk_scale(), recs, max_steps=2000, target=0.05)
    verdict("overfit sanity", final < 0.05, f"BCE {final:.4f} on 8 mixed pairs after {steps} steps")


def test_metric_oracles(verdict):
    rng = np.random.default_rng(0)
    exact = 0
    for _ in range(1000):
        p = rng.random((8, 8))
        if rng.random() < 0.3:
            p = np.round(p * 255) / 255
        g = (rng.random((8, 8)) < rng.uniform(0.1, 0.9)).astype(float)
        exact += mae(p, g) == oracles.mae_exact(p, g) and max_f_measure(p, g) == oracles.max_f_brute(p, g)
    worst = 0.0
    for _ in range(30):
        p = rng.random((16, 16))
        g = (rng.random((16, 16)) < rng.uniform(0.1, 0.9)).astype(float)
        worst = max(worst, abs(s_measure(p, g) - oracles.s_measure_ref(p, g)),
                    abs(e_measure(p, g) - oracles.e_measure_ref(p, g)))
    g = (rng.random((16, 16)) > 0.5).astype(float)
    identity = (mae(g, g) == 0.0 and max_f_measure(g, g) == 1.0 and abs(s_measure(g, g) - 1) <= 1e-12
                and abs(e_measure(g, g) - 1) <= 1e-12)
    ok = exact == 1000 and worst <= 1e-6 and identity
    verdict("metric oracles", ok,
            f"mae/max-F exact on {exact}/1000 pairs; S/E max deviation {worst:.1e}; P == G identity {identity}")


def test_schedule_exactness(verdict):
    got = [lr_schedule(s) for s in (0, 150_000, 250_000)]
    verdict("schedule exactness", got == [1e-4, 1e-5, 1e-6], f"lr at 0/150000/250000 = {got}")


@pytest.mark.slow
def test_determinism(verdict, tmp_path, synthetic):
    manifests = [arg for p in synthetic.values() for arg in ("--manifest", str(p))]
    logs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["--out", str(out), "--seed", "7", "train", "--set", "train.desk_scale=true",
                     *manifests, "--steps", "100"])
        assert code == 0
        logs.append(next(out.glob("train-*")) / "train.log")
    same_logs = logs[0].read_bytes() == logs[1].read_bytes()
    ckpt = next(logs[0].parent.glob("ckpt-*.npz"))
    runs = []
    for name in ("ea", "eb"):
        out = tmp_path / name
        assert main(["--out", str(out), "--seed", "7", "eval", "--checkpoint", str(ckpt), *manifests]) == 0
        runs.append(next(out.glob("eval-*")))
    files = sorted(p.relative_to(runs[0]) for p in runs[0].rglob("*") if p.is_file() and p.name != "config.txt")
    same_eval = all((runs[0] / f).read_bytes() == (runs[1] / f).read_bytes() for f in files)
    n_lines = len(logs[0].read_text().splitlines()) - 1
    verdict("determinism", same_logs and same_eval and n_lines == 100,
            f"train logs identical {same_logs} ({n_lines} steps); eval reruns byte-identical {same_eval} "
            f"({len(files)} files)")
