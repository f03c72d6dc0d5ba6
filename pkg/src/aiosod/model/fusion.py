"""Cross-modal token fusion and the convolutional decoder."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from aiosod.model.attention import Attention, Mlp


def upsample(x, size):
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class CrossBlock(nn.Module):
    """One cross-attention step applied in both directions with shared weights."""

    def __init__(self, dim, heads=4, mlp_ratio=4.0, eps=1e-5):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=eps)
        self.attn = Attention(dim, heads, qkv_bias=False)
        self.norm2 = nn.LayerNorm(dim, eps=eps)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def stream(self, x, other):
        x = x + self.attn(self.norm1(x), self.norm1(other))
        return x + self.mlp(self.norm2(x))

    def forward(self, rgb, aux):
        return self.stream(rgb, aux), self.stream(aux, rgb)


class TokenFusionModule(nn.Module):
    """RGB queries attend to aux keys/values and vice versa; streams merge by addition."""

    def __init__(self, dim, depth=5, heads=4, mlp_ratio=5.0, eps=1e-5):
        super().__init__()
        self.blocks = nn.ModuleList(CrossBlock(dim, heads, mlp_ratio, eps) for _ in range(depth))

    def streams(self, rgb, aux):
        if rgb.shape != aux.shape:
            raise ValueError(f"token streams differ in shape: {tuple(rgb.shape)} vs {tuple(aux.shape)}")
        for block in self.blocks:
            rgb, aux = block(rgb, aux)
        return rgb, aux

    def forward(self, rgb, aux):
        rgb, aux = self.streams(rgb, aux)
        return rgb + aux


class ChannelAttention(nn.Module):
    def __init__(self, channels, reduction=16):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc = nn.Sequential(
            nn.Conv2d(channels, hidden, 1, bias=False),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channels, 1, bias=False),
        )

    def forward(self, x):
        avg = self.fc(F.adaptive_avg_pool2d(x, 1))
        mx = self.fc(F.adaptive_max_pool2d(x, 1))
        return torch.sigmoid(avg + mx)


class SpatialAttention(nn.Module):
    def __init__(self, kernel_size=7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, bias=False)

    def forward(self, x):
        pooled = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(pooled))


class CBAM(nn.Module):
    def __init__(self, channels, reduction=16, kernel_size=7):
        super().__init__()
        self.channel = ChannelAttention(channels, reduction)
        self.spatial = SpatialAttention(kernel_size)

    def forward(self, x):
        x = x * self.channel(x)
        return x * self.spatial(x)


def conv_block(cin, cout):
    return nn.Sequential(nn.Conv2d(cin, cout, 3, padding=1), nn.ReLU(inplace=True))


def _same_size(*maps):
    shapes = {tuple(m.shape) for m in maps}
    if len(shapes) != 1:
        raise ValueError(f"feature maps must share one shape, got {sorted(shapes)}")


class FeatureFusionModule(nn.Module):
    """Fuse the decoder stream with the RGB and aux skips of one level.

    The skips are combined by sum and product and gated with CBAM; the
    result enhances the decoder stream by multiplication and addition.
    """

    def __init__(self, channels=64, reduction=16, kernel_size=7):
        super().__init__()
        self.cbam = CBAM(channels, reduction, kernel_size)
        self.conv1 = conv_block(channels, channels)
        self.conv2 = conv_block(channels, channels)

    def forward(self, f_up, s_rgb, s_aux):
        _same_size(f_up, s_rgb, s_aux)
        cross = self.cbam(s_rgb + s_aux + s_rgb * s_aux)
        x = f_up + cross + f_up * cross
        return self.conv2(self.conv1(x))


class DualConv(nn.Module):
    """Baseline decoder level: add the three inputs, then two 3x3 convolutions."""

    def __init__(self, channels=64):
        super().__init__()
        self.conv1 = conv_block(channels, channels)
        self.conv2 = conv_block(channels, channels)

    def forward(self, f_up, s_rgb, s_aux):
        _same_size(f_up, s_rgb, s_aux)
        return self.conv2(self.conv1(f_up + s_rgb + s_aux))


class MultiLevelFusion(nn.Module):
    """Bring three decoder levels to the finest size and fuse them.

    Each level is aligned by a 1x1 convolution at its own resolution (this
    commutes with bilinear upsampling), the three are concatenated, gated by
    channel attention and fused by a 3x3 convolution.
    """

    def __init__(self, channels=64, reduction=4):
        super().__init__()
        self.align = nn.ModuleList(nn.Conv2d(channels, channels, 1) for _ in range(3))
        self.attention = ChannelAttention(3 * channels, reduction)
        self.fuse = conv_block(3 * channels, channels)

    def forward(self, f1, f2, f3):
        s1, s2, s3 = (f.shape[-1] for f in (f1, f2, f3))
        if not s1 < s2 < s3 or {f.shape[1] for f in (f1, f2, f3)} != {f3.shape[1]}:
            raise ValueError(
                f"expected coarse-to-fine levels with equal channels, got "
                f"{tuple(f1.shape)}, {tuple(f2.shape)}, {tuple(f3.shape)}")
        size = f3.shape[-2:]
        x = torch.cat([upsample(self.align[0](f1), size), upsample(self.align[1](f2), size),
                       self.align[2](f3)], dim=1)
        return self.fuse(x * self.attention(x))


class PredictionHead(nn.Module):
    def __init__(self, channels=64, out_size=224):
        super().__init__()
        self.conv = nn.Conv2d(channels, 1, 1)
        self.out_size = out_size

    def logits(self, f):
        return upsample(self.conv(f), (self.out_size, self.out_size))

    def forward(self, f):
        return torch.sigmoid(self.logits(f))
