"""Saliency-map metrics: MAE, max F-measure, S-measure and max E-measure.

Predictions and ground truths are float arrays in [0, 1] of equal shape. The
threshold-based metrics binarize the ground truth at 0.5 and sweep the
prediction over the 256 thresholds ``k / 255`` using ``P > t``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

BETA2 = 0.3
THRESHOLDS = np.arange(256) / 255.0
EPS = np.finfo(np.float64).eps
METRICS = ("s_measure", "max_f", "e_measure", "mae")


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    if pred.size == 0:
        raise ValueError("empty maps")
    return pred, gt


def mae(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    # fsum keeps the total correctly rounded, independent of summation order
    return math.fsum(np.abs(pred - gt).ravel()) / pred.size


def _positives_above(pred: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Count of masked pixels with ``pred > t`` for every threshold t."""
    values = np.sort(pred[mask])
    return (values.size - np.searchsorted(values, THRESHOLDS, side="right")).astype(np.int64)


def f_curve(pred, gt, beta2: float = BETA2) -> np.ndarray:
    pred, gt = _pair(pred, gt)
    g = gt > 0.5
    tp = _positives_above(pred, g)
    fp = _positives_above(pred, ~g)
    n_pos = int(g.sum())
    predicted = tp + fp
    precision = np.divide(tp, predicted, out=np.zeros(len(tp)), where=predicted > 0)
    recall = tp / n_pos if n_pos else np.zeros(len(tp))
    denom = beta2 * precision + recall
    num = (1 + beta2) * precision * recall
    return np.divide(num, denom, out=np.zeros(len(tp)), where=denom > 0)


def max_f_measure(pred, gt, beta2: float = BETA2) -> float:
    """Best F_beta over the threshold sweep; 0 when the ground truth is empty."""
    pred, gt = _pair(pred, gt)
    if not (gt > 0.5).any():
        log.info("max-F on an empty ground truth: recall undefined, scoring 0")
        return 0.0
    return float(f_curve(pred, gt, beta2).max())


# ---------------------------------------------------------------- S-measure

def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + EPS)


def s_object(pred, g) -> float:
    u = g.mean()
    fg = _object_score(pred[g])
    bg = _object_score(1.0 - pred[~g])
    return u * fg + (1 - u) * bg


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def centroid(g: np.ndarray) -> tuple[int, int]:
    """1-based column/row centre of mass, rounded half away from zero."""
    rows, cols = g.shape
    total = g.sum()
    if total == 0:
        return _round_half_away(cols / 2), _round_half_away(rows / 2)
    x = (g.sum(axis=0) * np.arange(1, cols + 1)).sum() / total
    y = (g.sum(axis=1) * np.arange(1, rows + 1)).sum() / total
    return _round_half_away(x), _round_half_away(y)


def _ssim(p: np.ndarray, g: np.ndarray) -> float:
    n = p.size
    if n == 0:
        return 0.0
    x, y = p.mean(), g.mean()
    sx = ((p - x) ** 2).sum() / (n - 1 + EPS)
    sy = ((g - y) ** 2).sum() / (n - 1 + EPS)
    sxy = ((p - x) * (g - y)).sum() / (n - 1 + EPS)
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + EPS)
    if beta == 0:
        return 1.0
    return 0.0


def s_region(pred, g) -> float:
    rows, cols = g.shape
    x, y = centroid(g)
    gd = g.astype(np.float64)
    area = rows * cols
    w1 = x * y / area
    w2 = (cols - x) * y / area
    w3 = x * (rows - y) / area
    w4 = 1.0 - w1 - w2 - w3
    quads = [(slice(0, y), slice(0, x)), (slice(0, y), slice(x, cols)),
             (slice(y, rows), slice(0, x)), (slice(y, rows), slice(x, cols))]
    return sum(w * _ssim(pred[q], gd[q]) for w, q in zip((w1, w2, w3, w4), quads))


def s_measure(pred, gt, gamma: float = 0.5) -> float:
    """Structure measure: gamma * object term + (1 - gamma) * region term, clamped at 0."""
    pred, gt = _pair(pred, gt)
    g = gt > 0.5
    y = g.mean()
    if y == 0:
        return float(1.0 - pred.mean())
    if y == 1:
        return float(pred.mean())
    q = gamma * s_object(pred, g) + (1 - gamma) * s_region(pred, g)
    return float(max(q, 0.0))


# ---------------------------------------------------------------- E-measure

def e_curve(pred, gt) -> np.ndarray:
    """Enhanced-alignment score of ``pred > t`` at every threshold.

    A binary map against a binary mask only produces four alignment values
    (one per foreground/background combination), so the pixel sum reduces to
    four counts per threshold.
    """
    pred, gt = _pair(pred, gt)
    g = gt > 0.5
    n = g.size
    n_pos = int(g.sum())
    tp = _positives_above(pred, g)
    fp = _positives_above(pred, ~g)
    predicted = tp + fp
    if n_pos == 0:
        return (n - predicted) / n
    if n_pos == n:
        return predicted / n
    mu_f = predicted / n
    mu_g = n_pos / n

    def enhanced(f_val, g_val):
        a_f, a_g = f_val - mu_f, g_val - mu_g
        align = 2 * a_g * a_f / (a_g * a_g + a_f * a_f + EPS)
        return (align + 1) ** 2 / 4

    counts = {(1, 1): tp, (1, 0): fp, (0, 1): n_pos - tp, (0, 0): (n - n_pos) - fp}
    total = sum(c * enhanced(f, gv) for (f, gv), c in counts.items())
    return total / n


def e_measure(pred, gt) -> float:
    return float(e_curve(pred, gt).max())


# ---------------------------------------------------------------- datasets

@dataclass
class MetricsReport:
    """Per-dataset mean of the per-image scores."""

    dataset: str
    count: int = 0
    mae: float | None = None
    max_f: float | None = None
    s_measure: float | None = None
    e_measure: float | None = None
    per_image: dict[str, dict[str, float]] = field(default_factory=dict, repr=False)

    def as_row(self) -> dict[str, float | None]:
        return {m: getattr(self, m) for m in METRICS}


def score_pair(pred, gt) -> dict[str, float]:
    return {"s_measure": s_measure(pred, gt), "max_f": max_f_measure(pred, gt),
            "e_measure": e_measure(pred, gt), "mae": mae(pred, gt)}


def aggregate(dataset: str, per_image: dict[str, dict[str, float]]) -> MetricsReport:
    """Unweighted mean over images, taken in sorted-name order so it is order-independent."""
    names = sorted(per_image)
    report = MetricsReport(dataset, len(names), per_image=dict(per_image))
    if names:
        for m in METRICS:
            setattr(report, m, math.fsum(per_image[k][m] for k in names) / len(names))
    return report


def read_map(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def evaluate_folder(pred_dir, gt_dir, dataset: str | None = None) -> MetricsReport:
    """Score every prediction PNG against the ground truth with the same stem.

    Predictions are resized to the ground-truth size when they differ.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    gts = {p.stem: p for p in gt_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".bmp")}
    per_image = {}
    for p in sorted(pred_dir.glob("*.png")):
        if p.stem not in gts:
            log.warning("no ground truth for prediction %s", p.name)
            continue
        gt = read_map(gts[p.stem])
        with Image.open(p) as im:
            im = im.convert("L")
            if im.size != (gt.shape[1], gt.shape[0]):
                im = im.resize((gt.shape[1], gt.shape[0]), Image.BILINEAR)
            pred = np.asarray(im, dtype=np.float64) / 255.0
        per_image[p.stem] = score_pair(pred, gt)
    return aggregate(dataset or pred_dir.name, per_image)
