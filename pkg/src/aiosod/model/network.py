from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from aiosod.config import ModelConfig
from aiosod.model.backbone import T2TBackbone, init_weights
from aiosod.model.fusion import (DualConv, FeatureFusionModule, MultiLevelFusion, PredictionHead,
                                 TokenFusionModule, upsample)
from aiosod.model.tokens import TokenSequence, reduce_channels, split_batch

MODALITIES = ("rgb", "rgbd", "rgbt")


@dataclass
class Encoded:
    """Reduced, split tokens per level (fine to coarse) for both streams."""

    rgb: list[TokenSequence]
    aux: list[TokenSequence]


class AiOSOD(nn.Module):
    """Shared-weight saliency network for RGB, RGB-D and RGB-T input.

    One backbone encodes the paired batch ``[rgb; aux]``; the halves are
    split after channel reduction and fused by the token fusion module and
    the decoder. With no aux input (RGB data) the backbone runs once and the
    RGB tokens stand in for the aux stream.
    """

    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config = config or ModelConfig()
        c = config
        self.backbone = T2TBackbone(c)
        self.reduce = nn.ModuleList([
            nn.Linear(c.token_dim, c.reduced_dim),
            nn.Linear(c.token_dim, c.reduced_dim),
            nn.Linear(c.embed_dim, c.reduced_dim),
        ])
        self.tfm = (TokenFusionModule(c.reduced_dim, c.tfm_depth, c.tfm_heads, c.tfm_mlp_ratio, c.eps)
                    if c.use_tfm else None)
        level = ((lambda: FeatureFusionModule(c.reduced_dim, c.cbam_reduction, c.spatial_kernel))
                 if c.use_ffm else (lambda: DualConv(c.reduced_dim)))
        # coarse (top) to fine
        self.decoder = nn.ModuleList(level() for _ in range(3))
        self.mffm = MultiLevelFusion(c.reduced_dim, c.mffm_reduction) if c.use_mffm else None
        self.head = PredictionHead(c.reduced_dim, c.input_size)

    @classmethod
    def build(cls, config: ModelConfig | None = None, dtype=torch.float32) -> "AiOSOD":
        """Construct with seeded initial weights (same seed -> identical weights)."""
        config = config or ModelConfig()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            model = cls(config)
            init_weights(model)
        return model.to(dtype)

    def encode(self, rgb: torch.Tensor, aux: torch.Tensor | None = None) -> Encoded:
        if aux is None:
            levels = self.backbone(rgb)
            reduced = [reduce_channels(t, proj) for t, proj in zip(levels, self.reduce)]
            return Encoded(reduced, list(reduced))
        if aux.shape != rgb.shape:
            raise ValueError(f"rgb block {tuple(rgb.shape)} and aux block {tuple(aux.shape)} differ")
        levels = self.backbone(torch.cat([rgb, aux], dim=0))
        reduced = [reduce_channels(t, proj) for t, proj in zip(levels, self.reduce)]
        halves = [split_batch(t) for t in reduced]
        return Encoded([h[0] for h in halves], [h[1] for h in halves])

    def fuse_top(self, enc: Encoded) -> TokenSequence:
        rgb, aux = enc.rgb[2], enc.aux[2]
        if self.tfm is None:
            return rgb.with_values(rgb.values + aux.values)
        return rgb.with_values(self.tfm(rgb.values, aux.values))

    def decode(self, enc: Encoded, top: TokenSequence):
        x = top.to_map()
        levels = []
        for i, module in enumerate(self.decoder):
            j = 2 - i
            s_rgb, s_aux = enc.rgb[j].to_map(), enc.aux[j].to_map()
            if x.shape[-2:] != s_rgb.shape[-2:]:
                x = upsample(x, s_rgb.shape[-2:])
            x = module(x, s_rgb, s_aux)
            levels.append(x)
        return levels

    def logits(self, rgb, aux=None):
        enc = self.encode(rgb, aux)
        levels = self.decode(enc, self.fuse_top(enc))
        f = self.mffm(*levels) if self.mffm is not None else levels[-1]
        return self.head.logits(f)

    def forward(self, rgb, aux=None):
        return torch.sigmoid(self.logits(rgb, aux))


def model_forward(model: AiOSOD, batch) -> torch.Tensor:
    """Saliency maps (B, 1, S, S) for a PairedBatch.

    RGB batches take the fast path: the aux block must duplicate the RGB
    block, and only the RGB block is encoded.
    """
    images = torch.as_tensor(batch.images)
    images = images.to(next(model.parameters()).dtype)
    b = images.shape[0] // 2
    if images.shape[0] != 2 * b or len(batch.sample_ids) != b:
        raise ValueError(f"paired batch of {images.shape[0]} rows does not hold {len(batch.sample_ids)} pairs")
    rgb, aux = images[:b], images[b:]
    if batch.modality not in MODALITIES:
        raise ValueError(f"unknown modality {batch.modality!r}")
    if batch.modality == "rgb":
        if not torch.equal(rgb, aux):
            raise ValueError("modality 'rgb' requires the aux block to duplicate the rgb block")
        return model(rgb)
    return model(rgb, aux)
