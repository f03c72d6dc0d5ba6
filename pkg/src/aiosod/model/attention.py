from __future__ import annotations

import math

import torch
import torch.nn as nn

from aiosod.config import ConfigError
from aiosod.model.norms import make_norm


def scaled_dot_attention(q, k, v, d_k=None, return_weights=False):
    """softmax(q k^T / sqrt(d_k)) v over the last two axes.

    ``d_k`` defaults to the key width. Non-finite inputs are rejected rather
    than propagated.
    """
    q, k, v = (torch.as_tensor(t, dtype=torch.get_default_dtype()) if not torch.is_tensor(t) else t
               for t in (q, k, v))
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"query width {q.shape[-1]} != key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"{k.shape[-2]} keys but {v.shape[-2]} values")
    for name, t in (("query", q), ("key", k), ("value", v)):
        if not torch.isfinite(t).all():
            raise ValueError(f"non-finite {name} passed to attention")
    d_k = k.shape[-1] if d_k is None else d_k
    weights = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(d_k), dim=-1)
    out = weights @ v
    return (out, weights) if return_weights else out


def _check_finite(t: torch.Tensor) -> None:
    if not torch.isfinite(t).all():
        raise ValueError("non-finite activations reached an attention layer")


class Attention(nn.Module):
    """Multi-head attention; queries from ``x``, keys/values from ``context``.

    With ``out_dim`` set (tokens-to-token stages) the value path changes
    width and the output keeps a skip connection from the values.
    """

    def __init__(self, dim, heads=1, qkv_bias=False, out_dim=None):
        super().__init__()
        out_dim = out_dim or dim
        if out_dim % heads:
            raise ConfigError(f"attention width {out_dim} is not divisible by {heads} heads")
        self.heads = heads
        self.out_dim = out_dim
        self.value_skip = out_dim != dim
        self.q = nn.Linear(dim, out_dim, bias=qkv_bias)
        self.k = nn.Linear(dim, out_dim, bias=qkv_bias)
        self.v = nn.Linear(dim, out_dim, bias=qkv_bias)
        self.proj = nn.Linear(out_dim, out_dim)

    def _heads(self, t):
        b, n, _ = t.shape
        return t.reshape(b, n, self.heads, self.out_dim // self.heads).transpose(1, 2)

    def attention_weights(self, x, context=None):
        context = x if context is None else context
        q, k = self._heads(self.q(x)), self._heads(self.k(context))
        return torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1]), dim=-1)

    def forward(self, x, context=None):
        context = x if context is None else context
        _check_finite(x)
        attn = self.attention_weights(x, context)
        v = self.v(context)
        out = (attn @ self._heads(v)).transpose(1, 2).reshape(x.shape[0], x.shape[1], self.out_dim)
        out = self.proj(out)
        return v + out if self.value_skip else out


class Mlp(nn.Module):
    def __init__(self, dim, hidden, out_dim=None):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, out_dim or dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    """Pre-norm transformer block: x + MHA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, dim, heads, mlp_ratio=2.0, qkv_bias=False, norm="layer", eps=1e-5):
        super().__init__()
        if dim % heads:
            raise ConfigError(f"block width {dim} is not divisible by {heads} heads")
        self.norm1 = make_norm(norm, dim, eps)
        self.attn = Attention(dim, heads, qkv_bias)
        self.norm2 = make_norm(norm, dim, eps)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class TokenTransformer(nn.Module):
    """Tokens-to-token stage transformer: attention narrows dim -> out_dim."""

    def __init__(self, dim, out_dim, heads=1, mlp_ratio=1.0, norm="layer", eps=1e-5):
        super().__init__()
        self.norm1 = make_norm(norm, dim, eps)
        self.attn = Attention(dim, heads, qkv_bias=False, out_dim=out_dim)
        self.norm2 = make_norm(norm, out_dim, eps)
        self.mlp = Mlp(out_dim, int(out_dim * mlp_ratio))

    def forward(self, x):
        x = self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))
