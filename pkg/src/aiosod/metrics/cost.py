"""Parameter, FLOP and throughput accounting.

FLOPs follow the convention of the common ``thop`` profiler: one
multiply-accumulate of a convolution or linear layer counts as one FLOP, and
biases, normalisation, activations, pooling, resampling and the two
attention products (QK^T and AV) are not counted. The attention products are
reported separately in ``attention_rgb`` / ``attention_paired`` so the
attention-inclusive total is available.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import torch

from aiosod.config import ModelConfig

SUBMODULES = ("backbone", "reduce", "tfm", "decoder", "mffm", "head")


def count_params(model) -> dict[str, int]:
    """Exact trainable-scalar counts per top-level submodule, plus ``total``.

    The decoder is also broken down per level as ``decoder.0`` .. ``decoder.2``
    (coarse to fine); those entries are not added again into the total.
    """
    out = {}
    for name, child in model.named_children():
        out[name] = sum(p.numel() for p in child.parameters() if p.requires_grad)
    for name in SUBMODULES:
        out.setdefault(name, 0)
    out["total"] = sum(p.numel() for p in model.parameters() if p.requires_grad)
    for i, level in enumerate(getattr(model, "decoder", [])):
        out[f"decoder.{i}"] = sum(p.numel() for p in level.parameters())
    return out


# ---------------------------------------------------------------- analytic FLOPs

def _linear(tokens, cin, cout):
    return tokens * cin * cout


def _conv(size, cin, cout, k=1):
    return size * size * cin * k * k * cout


def backbone_flops(c: ModelConfig) -> tuple[int, int]:
    """(weight MACs, attention-product MACs) of one image through the backbone and reductions."""
    r1, r2, r3 = c.stage_resolutions
    (k0, _, _), (k1, _, _), (k2, _, _) = c.t2t_kernels
    d, e = c.token_dim, c.embed_dim
    macs = att = 0
    for tokens, cin in ((r1 * r1, c.in_chans * k0 * k0), (r2 * r2, d * k1 * k1)):
        hidden = int(d * c.t2t_mlp_ratio)
        macs += 3 * _linear(tokens, cin, d) + _linear(tokens, d, d)
        macs += _linear(tokens, d, hidden) + _linear(tokens, hidden, d)
        att += 2 * tokens * tokens * d
    n = r3 * r3
    macs += _linear(n, d * k2 * k2, e)
    hidden = int(e * c.mlp_ratio)
    block = 4 * _linear(n, e, e) + _linear(n, e, hidden) + _linear(n, hidden, e)
    macs += c.depth * block
    att += c.depth * 2 * n * n * e
    macs += _linear(r1 * r1, d, c.reduced_dim) + _linear(r2 * r2, d, c.reduced_dim)
    macs += _linear(n, e, c.reduced_dim)
    return macs, att


def decoder_flops(c: ModelConfig) -> dict[str, tuple[int, int]]:
    """(weight MACs, attention MACs) per decoder part for one RGB/aux pair."""
    r1, r2, r3 = c.stage_resolutions
    ch = c.reduced_dim
    parts = {}
    if c.use_tfm:
        n = r3 * r3
        hidden = int(ch * c.tfm_mlp_ratio)
        per_direction = 4 * _linear(n, ch, ch) + _linear(n, ch, hidden) + _linear(n, hidden, ch)
        parts["tfm"] = (2 * c.tfm_depth * per_direction, 2 * c.tfm_depth * 2 * n * n * ch)
    levels = 0
    for size in (r3, r2, r1):
        convs = 2 * _conv(size, ch, ch, 3)
        if c.use_ffm:
            hidden = max(1, ch // c.cbam_reduction)
            convs += 2 * (_conv(1, ch, hidden) + _conv(1, hidden, ch))
            convs += _conv(size, 2, 1, c.spatial_kernel)
        levels += convs
    parts["decoder"] = (levels, 0)
    if c.use_mffm:
        hidden = max(1, 3 * ch // c.mffm_reduction)
        m = sum(_conv(s, ch, ch) for s in (r1, r2, r3))
        m += 2 * (_conv(1, 3 * ch, hidden) + _conv(1, hidden, 3 * ch))
        m += _conv(r1, 3 * ch, ch, 3)
        parts["mffm"] = (m, 0)
    parts["head"] = (_conv(r1, ch, 1), 0)
    return parts


def count_flops(config: ModelConfig | None = None, modality: str = "paired", attention: bool = False) -> int:
    """Analytic per-sample FLOPs for the RGB fast path or the paired path.

    ``modality`` is ``"rgb"`` (one backbone pass) or anything else (two
    passes, one per image of the pair). ``attention=True`` adds the
    attention products.
    """
    c = config or ModelConfig()
    bb, bb_att = backbone_flops(c)
    passes = 1 if modality == "rgb" else 2
    total = passes * (bb + (bb_att if attention else 0))
    for macs, att in decoder_flops(c).values():
        total += macs + (att if attention else 0)
    return total


def hooked_flops(model, rgb, aux=None) -> int:
    """Weight MACs of a real forward pass, measured with hooks on every Linear and Conv2d."""
    total = 0

    def linear_hook(mod, inp, out):
        nonlocal total
        total += out.numel() // out.shape[-1] * mod.in_features * mod.out_features

    def conv_hook(mod, inp, out):
        nonlocal total
        kh, kw = mod.kernel_size
        total += out.numel() * (mod.in_channels // mod.groups) * kh * kw

    handles = []
    for m in model.modules():
        if isinstance(m, torch.nn.Linear):
            handles.append(m.register_forward_hook(linear_hook))
        elif isinstance(m, torch.nn.Conv2d):
            handles.append(m.register_forward_hook(conv_hook))
    try:
        with torch.no_grad():
            model(rgb, aux)
    finally:
        for h in handles:
            h.remove()
    return total


# ---------------------------------------------------------------- throughput

def measure_fps(model, modality: str = "paired", batch: int = 1, warmup: int = 1, iters: int = 10,
                input_size: int | None = None) -> float:
    """Images per second over ``iters`` timed forward passes after ``warmup`` untimed ones.

    Hardware-dependent; reported, never asserted against a number.
    """
    if warmup < 1:
        raise ValueError("warmup must be >= 1")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    size = input_size or model.config.input_size
    dtype = next(model.parameters()).dtype
    gen = torch.Generator().manual_seed(0)
    rgb = torch.randn(batch, 3, size, size, generator=gen, dtype=dtype)
    aux = None if modality == "rgb" else torch.randn(batch, 3, size, size, generator=gen, dtype=dtype)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for _ in range(warmup):
            model(rgb, aux)
        start = time.perf_counter()
        for _ in range(iters):
            model(rgb, aux)
        elapsed = time.perf_counter() - start
    model.train(was_training)
    return batch * iters / max(elapsed, 1e-12)


@dataclass
class CostReport:
    """Keys of the JSON document written by ``bench``:

    ``params``            per-submodule trainable scalars and ``total``
    ``flops_rgb``         thop-convention FLOPs, RGB fast path, one sample
    ``flops_paired``      thop-convention FLOPs, paired path, one sample
    ``attention_rgb``     attention-product MACs left out of ``flops_rgb``
    ``attention_paired``  attention-product MACs left out of ``flops_paired``
    ``fps_rgb`` / ``fps_paired``  measured images per second, or null
    ``convention``        one-line statement of the FLOP convention
    """

    params: dict[str, int]
    flops_rgb: int
    flops_paired: int
    attention_rgb: int
    attention_paired: int
    fps_rgb: float | None = None
    fps_paired: float | None = None
    convention: str = field(default="1 multiply-accumulate of Conv2d/Linear weights = 1 FLOP; "
                                     "attention products, biases, norms and resampling excluded")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CostReport":
        return cls(**json.loads(text))


def cost_report(model, fps: bool = False, batch: int = 1, warmup: int = 1, iters: int = 10) -> CostReport:
    c = model.config
    paired = count_flops(c, "paired")
    rgb = count_flops(c, "rgb")
    report = CostReport(
        params=count_params(model),
        flops_rgb=rgb,
        flops_paired=paired,
        attention_rgb=count_flops(c, "rgb", attention=True) - rgb,
        attention_paired=count_flops(c, "paired", attention=True) - paired,
    )
    if fps:
        report.fps_rgb = measure_fps(model, "rgb", batch, warmup, iters)
        report.fps_paired = measure_fps(model, "paired", batch, warmup, iters)
    return report
