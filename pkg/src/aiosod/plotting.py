"""Figures written next to the text reports. Rendering is deterministic."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def eval_figure(path, examples, reports):
    """Left: up to four (image, ground truth, prediction) rows. Right: metric bars per dataset.

    ``examples`` is a list of ``(name, rgb HxWx3 in [0,1], gt HxW, pred HxW)``.
    """
    examples = list(examples)[:4]
    rows = max(1, len(examples))
    fig = plt.figure(figsize=(10, 2.2 * rows + 0.6))
    grid = fig.add_gridspec(rows, 4, width_ratios=[1, 1, 1, 1.6])
    for i, (name, rgb, gt, pred) in enumerate(examples):
        for j, (img, title) in enumerate(((rgb, "image"), (gt, "ground truth"), (pred, "prediction"))):
            ax = fig.add_subplot(grid[i, j])
            ax.imshow(img, cmap=None if img.ndim == 3 else "gray", vmin=0, vmax=1)
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(title, fontsize=9)
            if j == 0:
                ax.set_ylabel(name, fontsize=7)
    ax = fig.add_subplot(grid[:, 3])
    metrics = [("s_measure", "Sm"), ("max_f", "Fmax"), ("e_measure", "Emax"), ("mae", "MAE")]
    width = 0.8 / max(1, len(reports))
    x = np.arange(len(metrics))
    for k, r in enumerate(reports):
        vals = [getattr(r, m) or 0.0 for m, _ in metrics]
        ax.bar(x + k * width, vals, width, label=r.dataset)
    ax.set_xticks(x + width * (len(reports) - 1) / 2)
    ax.set_xticklabels([label for _, label in metrics])
    ax.set_ylim(0, 1)
    ax.legend(fontsize=7)
    ax.set_title("per-dataset means", fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def cost_figure(path, cost):
    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.2))
    parts = {k: v for k, v in cost.params.items() if k != "total" and "." not in k and v}
    a.barh(list(parts), [v / 1e6 for v in parts.values()])
    a.set_xlabel("parameters (M)")
    a.invert_yaxis()
    names = ["rgb", "paired"]
    weights = [cost.flops_rgb / 1e9, cost.flops_paired / 1e9]
    attn = [cost.attention_rgb / 1e9, cost.attention_paired / 1e9]
    b.bar(names, weights, label="conv + linear")
    b.bar(names, attn, bottom=weights, label="attention products", alpha=0.5)
    b.set_ylabel("GFLOPs per sample")
    b.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def norm_figure(path, rows):
    """``rows``: list of (norm kind, interference value)."""
    fig, ax = plt.subplots(figsize=(4.5, 3))
    kinds = [r[0] for r in rows]
    vals = [r[1] for r in rows]
    ax.bar(kinds, vals, color=["tab:green" if v <= 1e-5 else "tab:red" for v in vals])
    ax.set_ylabel("max |change| of RGB rows")
    ax.set_title("aux-block swap, paired batch", fontsize=9)
    fig.tight_layout()
    return _save(fig, path)
