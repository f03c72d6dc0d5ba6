"""Small synthetic RGB / RGB-D / RGB-T datasets for tests and demos.

Each image holds one bright ellipse or rectangle on a textured background.
The ground truth is the object mask; depth is nearer (brighter) on the object
and thermal is a blurred hot spot over it, so the aux maps carry real signal.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from aiosod.data.manifest import SampleRecord, write_manifest


def _shape_mask(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = rng.uniform(0.3, 0.7) * h, rng.uniform(0.3, 0.7) * w
    ry, rx = rng.uniform(0.15, 0.3) * h, rng.uniform(0.15, 0.3) * w
    if rng.random() < 0.5:
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)


def make_sample(rng, h, w, modality):
    mask = _shape_mask(rng, h, w)
    base = rng.uniform(0.1, 0.4, size=3)
    color = rng.uniform(0.6, 1.0, size=3)
    noise = rng.normal(0, 0.05, size=(h, w, 3))
    rgb = np.where(mask[..., None], color, base) + noise
    rgb = (np.clip(rgb, 0, 1) * 255).round().astype(np.uint8)
    gt = mask.astype(np.uint8) * 255
    aux = None
    if modality == "rgbd":
        ramp = np.linspace(0.2, 0.4, h)[:, None] * np.ones((1, w))
        aux = np.where(mask, 0.85, ramp) + rng.normal(0, 0.02, size=(h, w))
    elif modality == "rgbt":
        soft = mask.astype(np.float64)
        for _ in range(3):
            soft = (soft + np.roll(soft, 1, 0) + np.roll(soft, -1, 0) + np.roll(soft, 1, 1)
                    + np.roll(soft, -1, 1)) / 5
        aux = 0.15 + 0.8 * soft + rng.normal(0, 0.02, size=(h, w))
    if aux is not None:
        aux = (np.clip(aux, 0, 1) * 255).round().astype(np.uint8)
    return rgb, aux, gt


def make_dataset(root, name: str, modality: str, n: int, size=(80, 96), seed: int = 0) -> Path:
    """Write ``n`` samples under ``root/name`` and return the manifest path."""
    root = Path(root) / name
    for sub in ("rgb", "aux", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, n, sum(map(ord, name))])
    h, w = size
    records = []
    for i in range(n):
        rgb, aux, gt = make_sample(rng, h, w, modality)
        stem = f"{name}_{i:04d}"
        Image.fromarray(rgb).save(root / "rgb" / f"{stem}.png")
        Image.fromarray(gt).save(root / "gt" / f"{stem}.png")
        aux_path = None
        if aux is not None:
            aux_path = root / "aux" / f"{stem}.png"
            Image.fromarray(aux).save(aux_path)
        records.append(SampleRecord(name, modality, root / "rgb" / f"{stem}.png", aux_path,
                                    root / "gt" / f"{stem}.png"))
    manifest = root / "manifest.tsv"
    write_manifest(manifest, records)
    return manifest


def make_mixed(root, n_per: int = 4, size=(80, 96), seed: int = 0) -> dict[str, Path]:
    """One dataset per modality: ``syn-rgb``, ``syn-rgbd``, ``syn-rgbt``."""
    return {m: make_dataset(root, f"syn-{m}", m, n_per, size, seed) for m in ("rgb", "rgbd", "rgbt")}
