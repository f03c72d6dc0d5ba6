from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from aiosod.data.loading import PairedBatch, assemble_batch, load_sample
from aiosod.data.manifest import SampleRecord


@dataclass(frozen=True)
class Draw:
    step: int
    dataset: int
    records: tuple[SampleRecord, ...]

    @property
    def modality(self) -> str:
        return self.records[0].modality


class _EpochCursor:
    """Uniform sampling without replacement, reshuffled every epoch."""

    def __init__(self, n, seed, index):
        self.n, self.seed, self.index = n, seed, index
        self.epoch = -1
        self.order = np.empty(0, dtype=np.int64)
        self.pos = 0

    def take(self, k):
        out = []
        while len(out) < k:
            if self.pos >= len(self.order):
                self.epoch += 1
                self.order = np.random.default_rng([self.seed, self.index, self.epoch]).permutation(self.n)
                self.pos = 0
            need = min(k - len(out), len(self.order) - self.pos)
            out.extend(int(i) for i in self.order[self.pos:self.pos + need])
            self.pos += need
        return out


def mixed_sampler(manifests: Sequence[Sequence[SampleRecord]], batch_size: int, seed: int = 0,
                  start: int = 0) -> Iterator[Draw]:
    """Infinite stream of modality-homogeneous batches of records.

    Each step picks one dataset with probability proportional to its size and
    takes the next ``batch_size`` records of that dataset's current epoch
    permutation. ``start`` skips ahead (used when resuming); the skipped
    draws are replayed without touching any image so the stream matches an
    uninterrupted run.
    """
    sizes = np.array([len(m) for m in manifests], dtype=np.float64)
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if sizes.sum() == 0:
        raise ValueError("every manifest is empty")
    for m in manifests:
        if len({r.modality for r in m}) > 1:
            raise ValueError("a dataset manifest mixes modalities")
    probs = sizes / sizes.sum()
    chooser = np.random.default_rng([seed, 0x5A17])
    cursors = [_EpochCursor(len(m), seed, i) for i, m in enumerate(manifests)]
    step = 0
    while True:
        d = int(chooser.choice(len(manifests), p=probs))
        idx = cursors[d].take(batch_size)
        if step >= start:
            yield Draw(step, d, tuple(manifests[d][i] for i in idx))
        step += 1


def sample_rng(seed: int, step: int, index: int) -> np.random.Generator:
    """Augmentation rng for one sample; independent of worker scheduling."""
    return np.random.default_rng([seed, step, index])


def load_draw(draw: Draw, seed: int, size: int, mode: str = "train", mean=None, std=None,
              hflip: bool = False) -> PairedBatch:
    kw = {}
    if mean is not None:
        kw["mean"] = mean
    if std is not None:
        kw["std"] = std
    samples = [load_sample(r, mode, sample_rng(seed, draw.step, i), size=size, hflip=hflip, **kw)
               for i, r in enumerate(draw.records)]
    return assemble_batch(samples, draw.modality)
