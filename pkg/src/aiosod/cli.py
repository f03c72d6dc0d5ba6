"""Command-line entry point: ``aiosod {train,eval,predict,bench,norm-demo}``.

Global flags (``--config``, ``--set``, ``--seed``, ``--out``) may appear
before or after the subcommand. Every invocation creates a fresh,
timestamped run directory under the output root holding ``config.txt`` (the
fully resolved run config) and the command's artifacts. The output root is
``--out``, else ``$AIOSOD_OUT``, else the config's ``out`` key.

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or missing
input, 3 non-finite training loss.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from aiosod import config as cfgmod

log = logging.getLogger("aiosod")

ENV_OUT = "AIOSOD_OUT"


class UsageError(Exception):
    """Bad input; reported as one line and exit code 2."""


# ---------------------------------------------------------------- helpers

def resolve_config(args) -> cfgmod.RunConfig:
    overrides = cfgmod.parse_overrides(args.set or [])
    cfg = cfgmod.load(args.config, overrides)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = args.out or os.environ.get(ENV_OUT) or cfg.out
    return replace(cfg, out=str(out))


def new_run_dir(root, command: str) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    base = Path(root) / f"{command}-{stamp}"
    path, n = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}-{n}")
        n += 1
    path.mkdir(parents=True)
    return path


def start_run(cfg, command: str, run_dir: Path | None = None) -> Path:
    run_dir = run_dir or new_run_dir(cfg.out, command)
    cfgmod.save(cfg, run_dir / "config.txt")
    return run_dir


def _manifests(paths):
    from aiosod.data.manifest import load_manifest
    out = []
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"manifest not found: {p}")
        out.append(load_manifest(p))
    return out


def _model_overridden(args) -> bool:
    return bool(args.config) or any(s.strip().startswith("model.") for s in (args.set or []))


def _load_model(args, cfg):
    """Model and run config from a checkpoint; a conflicting requested model config is refused."""
    from aiosod.model.network import AiOSOD
    from aiosod.training.checkpoint import checkpoint_load, restore
    ckpt = checkpoint_load(args.checkpoint, expect=cfg.model if _model_overridden(args) else None)
    model = AiOSOD.build(ckpt.config.model)
    restore(ckpt, model)
    model.eval()
    return model, ckpt


def _to_png(pred) -> np.ndarray:
    return np.clip(np.rint(np.asarray(pred, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def _denormalise(img, mean, std):
    return np.clip(img.transpose(1, 2, 0) * np.asarray(std) + np.asarray(mean), 0, 1)


# ---------------------------------------------------------------- commands

def cmd_train(args, cfg) -> int:
    from aiosod.training.trainer import train
    paths = args.manifest or list(cfg.data.train)
    if not paths:
        raise UsageError("no training manifest: pass --manifest or set data.train")
    datasets = _manifests(paths)
    if not any(datasets):
        raise UsageError("every training manifest is empty")
    run_dir = Path(args.resume) if args.resume else None
    if run_dir is not None and not run_dir.is_dir():
        raise UsageError(f"resume directory not found: {run_dir}")
    run_dir = start_run(cfg, "train", run_dir)
    steps = args.steps if args.steps is not None else cfg.train.total_steps
    state = train(cfg, datasets, run_dir, steps=steps, resume=bool(args.resume))
    last = state.history[-1] if state.history else float("nan")
    print(f"trained to step {state.step}, last loss {last:.6f}, run dir {run_dir}")
    return 0


def cmd_eval(args, cfg) -> int:
    import torch
    from PIL import Image
    from aiosod.data.loading import assemble_batch, load_sample
    from aiosod.data.manifest import group_by_dataset
    from aiosod.metrics.cost import cost_report
    from aiosod.metrics.report import benchmark_report, per_image_csv
    from aiosod.metrics.saliency import aggregate, score_pair
    from aiosod.model.network import model_forward
    from aiosod.plotting import eval_figure

    model, ckpt = _load_model(args, cfg)
    paths = args.manifest or list(cfg.data.eval)
    if not paths:
        raise UsageError("no evaluation manifest: pass --manifest or set data.eval")
    records = [r for m in _manifests(paths) for r in m]
    run_cfg = replace(ckpt.config, data=cfg.data, out=cfg.out, seed=cfg.seed)
    run_dir = start_run(run_cfg, "eval")
    size = ckpt.config.model.input_size
    d = cfg.data
    reports, examples = [], []
    for dataset, recs in sorted(group_by_dataset(records).items()):
        out_dir = run_dir / "predictions" / dataset
        out_dir.mkdir(parents=True, exist_ok=True)
        per_image = {}
        for rec in recs:
            sample = load_sample(rec, "eval", size=size, mean=d.mean, std=d.std)
            with torch.no_grad():
                pred = model_forward(model, assemble_batch([sample]))[0, 0].numpy()
            png = _to_png(pred)
            Image.fromarray(png).save(out_dir / f"{rec.rgb_path.stem}.png")
            quantised = png.astype(np.float64) / 255.0
            per_image[rec.rgb_path.stem] = score_pair(quantised, sample.gt[0].astype(np.float64))
            if len(examples) < 4:
                examples.append((rec.sample_id, _denormalise(sample.rgb, d.mean, d.std), sample.gt[0], quantised))
        reports.append(aggregate(dataset, per_image))
    text, csv_text = benchmark_report(reports, cost_report(model))
    (run_dir / "report.txt").write_text(text, encoding="utf-8")
    (run_dir / "report.csv").write_text(csv_text, encoding="utf-8")
    (run_dir / "metrics_per_image.csv").write_text(per_image_csv(reports), encoding="utf-8")
    eval_figure(run_dir / "eval.png", examples, reports)
    print(text, end="")
    print(f"run dir {run_dir}")
    return 0


def cmd_predict(args, cfg) -> int:
    import torch
    from PIL import Image
    from aiosod.data.loading import _resize, normalise, read_image

    model, ckpt = _load_model(args, cfg)
    size = ckpt.config.model.input_size
    d = cfg.data
    for p in (args.rgb, args.aux):
        if p is not None and not Path(p).is_file():
            raise UsageError(f"input image not found: {p}")
    rgb = read_image(args.rgb, 3)
    aux = read_image(args.aux, 3) if args.aux else None
    if aux is not None and aux.shape[:2] != rgb.shape[:2]:
        log.warning("aux size %s differs from rgb size %s; resizing to %d", aux.shape[:2][::-1],
                    rgb.shape[:2][::-1], size)
    x = torch.from_numpy(normalise(_resize(rgb, size), d.mean, d.std))[None]
    a = torch.from_numpy(normalise(_resize(aux, size), d.mean, d.std))[None] if aux is not None else None
    with torch.no_grad():
        pred = model(x, a)[0, 0].numpy()
    run_dir = start_run(replace(ckpt.config, data=cfg.data, out=cfg.out, seed=cfg.seed), "predict")
    out = run_dir / (args.output or f"{Path(args.rgb).stem}.png")
    Image.fromarray(_to_png(pred)).save(out)
    print(f"{'paired' if aux is not None else 'rgb fast'} path -> {out}")
    return 0


def cmd_bench(args, cfg) -> int:
    from aiosod.metrics.cost import cost_report
    from aiosod.metrics.report import cost_text
    from aiosod.model.network import AiOSOD
    from aiosod.plotting import cost_figure

    model = AiOSOD.build(cfg.model)
    report = cost_report(model, fps=args.fps, batch=args.batch, warmup=args.warmup, iters=args.iters)
    if not report.flops_rgb < report.flops_paired:
        raise RuntimeError("expected the RGB fast path to cost less than the paired path")
    run_dir = start_run(cfg, "bench")
    text = cost_text(report) + "\n"
    (run_dir / "cost.json").write_text(report.to_json(), encoding="utf-8")
    (run_dir / "report.txt").write_text(text, encoding="utf-8")
    cost_figure(run_dir / "cost.png", report)
    print(text, end="")
    print(f"run dir {run_dir}")
    return 0


def norm_demo_rows(cfg, rows: int = 4, tokens: int = 16, channels: int = 32, identical: bool = False):
    """Interference of both norm kinds on seeded random blocks.

    Returns ``[(kind, token-level metric, backbone-level max relative change)]``.
    """
    import torch
    from aiosod.model.backbone import T2TBackbone, init_weights
    from aiosod.model.norms import interference_metric

    rng = np.random.default_rng([cfg.seed, 1])
    rgb = rng.normal(size=(rows, tokens, channels))
    aux_a = rng.normal(loc=1.0, scale=2.0, size=(rows, tokens, channels))
    aux_b = aux_a.copy() if identical else rng.normal(loc=-1.0, scale=0.5, size=(rows, tokens, channels))
    m = cfg.model
    gen = torch.Generator().manual_seed(cfg.seed)
    shape = (1, m.in_chans, m.input_size, m.input_size)
    img = torch.randn(shape, generator=gen, dtype=torch.float64)
    img_a = 2 * torch.randn(shape, generator=gen, dtype=torch.float64) + 1
    img_b = img_a.clone() if identical else 0.5 * torch.randn(shape, generator=gen, dtype=torch.float64) - 1
    out = []
    for kind in ("layer", "batch"):
        token_level = interference_metric(kind, rgb, aux_a, aux_b)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            backbone = T2TBackbone(replace(m, norm=kind))
            init_weights(backbone)
        backbone = backbone.double().train()
        with torch.no_grad():
            first = backbone(torch.cat([img, img_a]))[2].values[:1]
            second = backbone(torch.cat([img, img_b]))[2].values[:1]
        rel = float((first - second).abs().max() / first.abs().max().clamp_min(1e-300))
        out.append((kind, token_level, rel))
    return out


def cmd_norm_demo(args, cfg) -> int:
    import csv
    from aiosod.plotting import norm_figure

    rows = norm_demo_rows(cfg, args.rows, args.tokens, args.channels, args.identical_aux)
    run_dir = start_run(cfg, "norm-demo")
    with open(run_dir / "norm_interference.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["norm", "token_interference", "backbone_rel_change"])
        for kind, token_level, rel in rows:
            w.writerow([kind, repr(token_level), repr(rel)])
    norm_figure(run_dir / "norm_interference.png", [(k, t) for k, t, _ in rows])
    names = {"layer": "LayerNorm", "batch": "BatchNorm"}
    for kind, token_level, rel in rows:
        print(f"{names[kind]:<10} interference {token_level:.6g}  backbone rgb-half change {rel:.3g}")
    print(f"run dir {run_dir}")
    return 0


# ---------------------------------------------------------------- parser

def _global_flags(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="run config file (key = value lines)")
    parser.add_argument("--set", action="append", default=default, metavar="KEY=VALUE",
                        help="override one config key, e.g. --set model.norm=batch (repeatable)")
    parser.add_argument("--seed", type=int, default=default, help="seed for every random choice")
    parser.add_argument("--out", default=default, help=f"output root (default: ${ENV_OUT} or config 'out')")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aiosod", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train on one or more manifests")
    p.add_argument("--manifest", action="append", help="training manifest (repeatable; default data.train)")
    p.add_argument("--steps", type=int, help="stop after this many steps (default train.total_steps)")
    p.add_argument("--resume", metavar="RUN_DIR", help="continue the run in RUN_DIR from its newest checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="predict and score every sample of a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", action="append", help="evaluation manifest (repeatable; default data.eval)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="saliency map for one image (pair)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--aux", help="depth or thermal image; omit for the RGB fast path")
    p.add_argument("--output", help="file name inside the run directory")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", parents=[common], help="parameter, FLOP and optional FPS report")
    p.add_argument("--fps", action="store_true", help="also time forward passes (not bit-reproducible)")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--iters", type=int, default=10)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("norm-demo", parents=[common], help="layer vs batch norm leakage across a paired batch")
    p.add_argument("--rows", type=int, default=4, help="rows per block")
    p.add_argument("--tokens", type=int, default=16)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--identical-aux", action="store_true", help="swap in an identical aux block (expect 0)")
    p.set_defaults(func=cmd_norm_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from aiosod.data.manifest import ManifestError
    from aiosod.training.checkpoint import CheckpointError
    from aiosod.training.trainer import NonFiniteLoss
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (UsageError, cfgmod.ConfigError, ManifestError, CheckpointError, FileNotFoundError) as exc:
        print(f"aiosod {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except NonFiniteLoss as exc:
        print(f"aiosod {args.command}: error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"aiosod {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
