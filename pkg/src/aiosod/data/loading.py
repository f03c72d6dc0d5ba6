"""Image decoding, augmentation and paired-batch assembly."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from aiosod.data.manifest import MODALITIES, SampleRecord

log = logging.getLogger(__name__)

MEAN = (0.485, 0.456, 0.406)
STD = (0.229, 0.224, 0.225)


@dataclass
class Sample:
    sample_id: str
    modality: str
    rgb: np.ndarray            # (3, S, S) normalised
    aux: np.ndarray | None     # (3, S, S) normalised, None for RGB data
    gt: np.ndarray             # (1, S, S) in [0, 1]


@dataclass
class PairedBatch:
    """Rows ``0..B-1`` hold RGB images, rows ``B..2B-1`` the aux images in the same order."""

    images: np.ndarray
    gts: np.ndarray
    modality: str
    sample_ids: list[str]

    @property
    def size(self) -> int:
        return len(self.sample_ids)


def read_image(path, channels: int) -> np.ndarray:
    """Decode to float32 in [0, 1], shape (H, W, channels).

    16-bit single-channel images (depth) are scaled by 1/65535, 8-bit by 1/255.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                arr = np.clip(arr, 0.0, 1.0)
                gray = arr.astype(np.float32)
                return np.repeat(gray[..., None], channels, axis=2) if channels == 3 else gray[..., None]
            target = "RGB" if channels == 3 else "L"
            arr = np.asarray(im.convert(target), dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from exc
    return arr if channels == 3 else arr[..., None]


def _resize(arr: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of an (H, W, C) float map to (size, size, C)."""
    if arr.shape[:2] == (size, size):
        return arr
    out = [np.asarray(Image.fromarray(arr[..., c], mode="F").resize((size, size), Image.BILINEAR))
           for c in range(arr.shape[2])]
    return np.stack(out, axis=2)


def train_resize(size: int) -> int:
    """Pre-crop side length: 256 for 224 crops, scaled proportionally otherwise."""
    return int(round(size * 256 / 224))


def normalise(img: np.ndarray, mean=MEAN, std=STD) -> np.ndarray:
    """(H, W, 3) in [0, 1] -> (3, H, W) channel-normalised float32."""
    out = (img - np.asarray(mean, np.float32)) / np.asarray(std, np.float32)
    return np.ascontiguousarray(out.transpose(2, 0, 1), dtype=np.float32)


def load_sample(rec: SampleRecord, mode: str = "eval", rng: np.random.Generator | None = None,
                size: int = 224, mean=MEAN, std=STD, hflip: bool = False) -> Sample:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    rgb = read_image(rec.rgb_path, 3)
    aux = read_image(rec.aux_path, 3) if rec.aux_path is not None else None
    gt = read_image(rec.gt_path, 1)
    if aux is not None and aux.shape[:2] != rgb.shape[:2]:
        log.warning("%s: aux size %s differs from rgb size %s; resizing both",
                    rec.sample_id, aux.shape[:2], rgb.shape[:2])
    maps = [m for m in (rgb, aux, gt) if m is not None]
    if mode == "eval":
        maps = [_resize(m, size) for m in maps]
    else:
        if rng is None:
            raise ValueError("train mode needs an rng for the random crop")
        big = train_resize(size)
        maps = [_resize(m, big) for m in maps]
        top, left = (int(v) for v in rng.integers(0, big - size + 1, size=2))
        maps = [m[top:top + size, left:left + size] for m in maps]
        if hflip and rng.random() < 0.5:
            maps = [m[:, ::-1] for m in maps]
    rgb, *rest = maps
    aux = rest[0] if aux is not None else None
    gt = rest[-1]
    if gt.shape[:2] != rgb.shape[:2]:
        raise ValueError(f"{rec.sample_id}: gt {gt.shape[:2]} and rgb {rgb.shape[:2]} differ after processing")
    return Sample(
        sample_id=rec.sample_id,
        modality=rec.modality,
        rgb=normalise(rgb, mean, std),
        aux=normalise(aux, mean, std) if aux is not None else None,
        gt=np.ascontiguousarray(np.clip(gt, 0.0, 1.0).transpose(2, 0, 1), dtype=np.float32),
    )


def assemble_batch(samples, modality: str | None = None) -> PairedBatch:
    samples = list(samples)
    if not samples:
        raise ValueError("cannot assemble an empty batch")
    kinds = {s.modality for s in samples}
    if len(kinds) > 1:
        raise ValueError(f"batch mixes modalities {sorted(kinds)}")
    kind = kinds.pop()
    if modality is not None and modality != kind:
        raise ValueError(f"requested modality {modality!r} but samples are {kind!r}")
    if kind not in MODALITIES:
        raise ValueError(f"unknown modality {kind!r}")
    rgb = [s.rgb for s in samples]
    aux = [s.rgb if kind == "rgb" else s.aux for s in samples]
    if any(a is None for a in aux):
        raise ValueError(f"modality {kind!r} sample without aux image")
    return PairedBatch(
        images=np.stack(rgb + aux).astype(np.float32, copy=False),
        gts=np.stack([s.gt for s in samples]).astype(np.float32, copy=False),
        modality=kind,
        sample_ids=[s.sample_id for s in samples],
    )
