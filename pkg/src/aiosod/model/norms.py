"""Layer vs. batch normalisation, and how much a paired batch leaks through each.

Layer norm takes its statistics per token over the channel axis, so the RGB
half of a paired batch never sees the auxiliary half. Batch norm pools
statistics over the batch axis (and, for tokens, the token axis), which mixes
the two modalities.
"""

from __future__ import annotations

import warnings

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

EPS = 1e-5


def _tensor(x):
    if torch.is_tensor(x):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def layernorm_apply(x, scale=None, offset=None, eps=EPS):
    """Normalise each row over its last axis. Constant rows map to zero."""
    x = _tensor(x)
    return F.layer_norm(x, x.shape[-1:], scale, offset, eps)


def batchnorm_apply(x, scale=None, offset=None, running_stats=None, eps=EPS):
    """Normalise each channel (last axis) with statistics over every other axis.

    Without ``running_stats`` this is training-mode batch norm (biased
    variance). ``running_stats=(mean, var)`` gives the inference form.
    """
    x = _tensor(x)
    if x.dim() == 1:
        x = x[:, None]
        squeeze = True
    else:
        squeeze = False
    axes = tuple(range(x.dim() - 1))
    if running_stats is None:
        if np.prod([x.shape[a] for a in axes]) == 1:
            warnings.warn("batch norm over a single element: statistics are degenerate",
                          RuntimeWarning, stacklevel=2)
        mean = x.mean(dim=axes)
        var = x.var(dim=axes, unbiased=False)
    else:
        mean, var = (_tensor(s).to(x.dtype) for s in running_stats)
    out = (x - mean) / torch.sqrt(var + eps)
    if scale is not None:
        out = out * _tensor(scale).to(x.dtype)
    if offset is not None:
        out = out + _tensor(offset).to(x.dtype)
    return out[:, 0] if squeeze else out


def interference_metric(norm_kind, rgb_block, aux_a, aux_b, eps=EPS) -> float:
    """Max |change| of the normalised RGB rows when the aux rows are swapped.

    Rows are along the first axis; ``rgb_block`` and each aux candidate are
    stacked into one paired batch ``[rgb; aux]`` exactly as the model sees it.
    """
    rgb, a, b = (_tensor(t) for t in (rgb_block, aux_a, aux_b))
    if a.shape != b.shape:
        raise ValueError(f"aux candidates differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() == 0:
        a, b = a[None], b[None]
    if rgb.shape[1:] != a.shape[1:]:
        raise ValueError(f"rgb rows {tuple(rgb.shape)} and aux rows {tuple(a.shape)} do not stack")
    apply = {"layer": layernorm_apply, "batch": batchnorm_apply}[norm_kind]
    n = rgb.shape[0]
    first = apply(torch.cat([rgb, a]), eps=eps)[:n]
    second = apply(torch.cat([rgb, b]), eps=eps)[:n]
    return float((first - second).abs().max())


class TokenBatchNorm(nn.BatchNorm1d):
    """Batch norm over (batch, tokens) for (B, L, C) token tensors."""

    def forward(self, x):
        if x.dim() == 3:
            return super().forward(x.transpose(1, 2)).transpose(1, 2)
        return super().forward(x)


def make_norm(kind: str, dim: int, eps: float = EPS) -> nn.Module:
    if kind == "layer":
        return nn.LayerNorm(dim, eps=eps)
    if kind == "batch":
        return TokenBatchNorm(dim, eps=eps)
    raise ValueError(f"unknown norm kind {kind!r}")
