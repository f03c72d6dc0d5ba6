from __future__ import annotations

import math

import torch
import torch.nn as nn

from aiosod.config import ModelConfig
from aiosod.model.attention import Block, TokenTransformer
from aiosod.model.norms import make_norm
from aiosod.model.tokens import TokenSequence, soft_split


def sinusoid_table(n_position: int, dim: int) -> torch.Tensor:
    position = torch.arange(n_position, dtype=torch.float64)[:, None]
    rates = torch.pow(10000.0, -2.0 * (torch.arange(dim) // 2).double() / dim)
    table = position * rates[None, :]
    table[:, 0::2] = torch.sin(table[:, 0::2])
    table[:, 1::2] = torch.cos(table[:, 1::2])
    return table[None].float()


class T2TBackbone(nn.Module):
    """Tokens-to-token transformer emitting three token levels.

    Level 1 and 2 come out of the two tokens-to-token stages (``token_dim``
    channels); level 3 is the output of the transformer trunk
    (``embed_dim`` channels). No layer mixes batch rows unless
    ``config.norm == "batch"``.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        (k0, _, _), (k1, _, _), (k2, _, _) = c.t2t_kernels
        self.t2t1 = TokenTransformer(c.in_chans * k0 * k0, c.token_dim, mlp_ratio=c.t2t_mlp_ratio,
                                     norm=c.norm, eps=c.eps)
        self.t2t2 = TokenTransformer(c.token_dim * k1 * k1, c.token_dim, mlp_ratio=c.t2t_mlp_ratio,
                                     norm=c.norm, eps=c.eps)
        self.project = nn.Linear(c.token_dim * k2 * k2, c.embed_dim)
        n_top = c.stage_resolutions[2] ** 2
        self.register_buffer("pos_embed", sinusoid_table(n_top, c.embed_dim), persistent=False)
        self.blocks = nn.ModuleList(
            Block(c.embed_dim, c.heads, c.mlp_ratio, c.qkv_bias, c.norm, c.eps) for _ in range(c.depth))
        self.norm = make_norm(c.norm, c.embed_dim, c.eps)

    def soft_split(self, tokens: TokenSequence, stage: int) -> TokenSequence:
        if not 0 <= stage < len(self.config.t2t_kernels):
            raise IndexError(f"no soft-split stage {stage}")
        return soft_split(tokens, *self.config.t2t_kernels[stage], stage=stage)

    def forward(self, t0):
        if not isinstance(t0, TokenSequence):
            t0 = TokenSequence.from_image(t0)
        x = self.soft_split(t0, 0)
        t1 = x.with_values(self.t2t1(x.values))
        x = self.soft_split(t1, 1)
        t2 = x.with_values(self.t2t2(x.values))
        x = self.soft_split(t2, 2)
        v = self.project(x.values) + self.pos_embed.to(x.values.dtype)
        for block in self.blocks:
            v = block(v)
        t3 = x.with_values(self.norm(v))
        return t1, t2, t3


def init_weights(module: nn.Module) -> None:
    """Truncated-normal projections, zero biases, unit norms; convs keep torch defaults."""
    for m in module.modules():
        if isinstance(m, nn.Linear):
            nn.init.trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.LayerNorm, nn.BatchNorm1d, nn.BatchNorm2d)):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Conv2d):
            nn.init.kaiming_uniform_(m.weight, a=math.sqrt(5))
            if m.bias is not None:
                fan_in = m.weight[0].numel()
                bound = 1 / math.sqrt(fan_in)
                nn.init.uniform_(m.bias, -bound, bound)
