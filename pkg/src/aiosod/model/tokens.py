from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from aiosod.config import ConfigError, soft_split_size


@dataclass(frozen=True)
class TokenSequence:
    """Tokens of shape (batch, length, channels) laid out on a rows x cols grid."""

    values: torch.Tensor
    grid: tuple[int, int]

    def __post_init__(self):
        if self.values.dim() != 3:
            raise ValueError(f"token values must be rank 3, got shape {tuple(self.values.shape)}")
        rows, cols = self.grid
        if rows * cols != self.values.shape[1]:
            raise ValueError(f"grid {self.grid} does not match token length {self.values.shape[1]}")

    @property
    def batch(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @classmethod
    def from_image(cls, image: torch.Tensor) -> "TokenSequence":
        """Pixels as tokens: (B, C, H, W) -> (B, H*W, C)."""
        b, c, h, w = image.shape
        return cls(image.flatten(2).transpose(1, 2), (h, w))

    def to_map(self) -> torch.Tensor:
        """(B, L, C) -> (B, C, rows, cols)."""
        rows, cols = self.grid
        return self.values.transpose(1, 2).reshape(self.batch, self.channels, rows, cols)

    def with_values(self, values: torch.Tensor) -> "TokenSequence":
        return TokenSequence(values, self.grid)


def soft_split(tokens: TokenSequence, kernel: int, stride: int, padding: int,
               stage: int | None = None) -> TokenSequence:
    """Merge each k x k neighbourhood of tokens into one token (unfold).

    Output channels are ``kernel**2 * channels``, ordered channel-major as in
    ``torch.nn.functional.unfold``.
    """
    rows, cols = tokens.grid
    out_rows = soft_split_size(rows, kernel, stride, padding)
    out_cols = soft_split_size(cols, kernel, stride, padding)
    if out_rows < 1 or out_cols < 1 or kernel > min(rows, cols) + 2 * padding:
        where = f"soft-split stage {stage}" if stage is not None else "soft split"
        raise ConfigError(
            f"{where}: kernel {kernel} / stride {stride} / padding {padding} "
            f"does not fit a {rows}x{cols} token grid")
    patches = F.unfold(tokens.to_map(), kernel_size=kernel, stride=stride, padding=padding)
    return TokenSequence(patches.transpose(1, 2), (out_rows, out_cols))


def split_batch(tokens: torch.Tensor | TokenSequence):
    """Split a paired batch into its RGB half and auxiliary half, in order."""
    values = tokens.values if isinstance(tokens, TokenSequence) else tokens
    n = values.shape[0]
    if n % 2:
        raise ValueError(f"paired batch must have an even batch size, got {n}")
    first, second = values[: n // 2], values[n // 2:]
    if isinstance(tokens, TokenSequence):
        return tokens.with_values(first), tokens.with_values(second)
    return first, second


def reduce_channels(tokens: TokenSequence, proj: torch.nn.Linear) -> TokenSequence:
    if tokens.channels != proj.in_features:
        raise ValueError(f"expected {proj.in_features} channels, got {tokens.channels}")
    return tokens.with_values(proj(tokens.values))
