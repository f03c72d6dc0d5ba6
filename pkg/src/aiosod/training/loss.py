from __future__ import annotations

import torch

EPS = 1e-7


def bce_loss(pred, gt, eps: float = EPS) -> torch.Tensor:
    """Per-pixel mean binary cross-entropy with predictions clamped to [eps, 1 - eps]."""
    pred, gt = torch.as_tensor(pred), torch.as_tensor(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {tuple(pred.shape)} and ground truth {tuple(gt.shape)} differ")
    gt = gt.to(pred.dtype)
    p = pred.clamp(eps, 1 - eps)
    return -(gt * torch.log(p) + (1 - gt) * torch.log(1 - p)).mean()
