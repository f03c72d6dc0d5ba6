"""Finite-difference check of the model's analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from aiosod.config import ModelConfig
from aiosod.model.network import AiOSOD
from aiosod.training.loss import bce_loss

TINY = ModelConfig(input_size=32, token_dim=4, t2t_mlp_ratio=1.0, embed_dim=8, depth=1, heads=2,
                   reduced_dim=20, tfm_depth=1, tfm_heads=2, tfm_mlp_ratio=2.0, cbam_reduction=4,
                   mffm_reduction=4)


@dataclass
class GradResult:
    submodule: str
    checked: int
    max_rel_err: float


def _rel_err(analytic: float, numeric: float, floor: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(config: ModelConfig = TINY, n_scalars: int = 24, h: float = 1e-5, seed: int = 0,
                   floor: float = 1e-8, jitter: float = 0.1, batch: int = 1) -> list[GradResult]:
    """Compare autograd against central differences in float64.

    ``n_scalars`` weights are drawn at random from every top-level submodule.
    The objective is the BCE of a paired forward pass against a random mask.
    Every weight is first moved by N(0, jitter^2): at the default
    init the backbone gradients sit near 1e-10, where the difference quotient
    is mostly roundoff.
    """
    model = AiOSOD.build(config, dtype=torch.float64)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(jitter * torch.randn(p.shape, generator=gen, dtype=torch.float64))
    s = config.input_size
    rgb = torch.randn(batch, 3, s, s, generator=gen, dtype=torch.float64)
    aux = torch.randn(batch, 3, s, s, generator=gen, dtype=torch.float64)
    gt = (torch.rand(batch, 1, s, s, generator=gen, dtype=torch.float64) > 0.5).double()

    def objective():
        return bce_loss(model(rgb, aux), gt)

    model.zero_grad()
    objective().backward()
    rng = np.random.default_rng(seed)
    results = []
    with torch.no_grad():
        for name, sub in model.named_children():
            params = [p for p in sub.parameters() if p.requires_grad]
            if not params:
                continue
            sizes = np.array([p.numel() for p in params])
            flat_ids = rng.choice(sizes.sum(), size=min(n_scalars, int(sizes.sum())), replace=False)
            offsets = np.concatenate([[0], np.cumsum(sizes)])
            worst = 0.0
            for fid in flat_ids:
                k = int(np.searchsorted(offsets, fid, side="right") - 1)
                p, j = params[k], int(fid - offsets[k])
                view = p.view(-1)
                old = float(view[j])
                view[j] = old + h
                up = float(objective())
                view[j] = old - h
                down = float(objective())
                view[j] = old
                numeric = (up - down) / (2 * h)
                analytic = float(p.grad.view(-1)[j])
                worst = max(worst, _rel_err(analytic, numeric, floor))
            results.append(GradResult(name, len(flat_ids), worst))
    return results
