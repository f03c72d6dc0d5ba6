from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from aiosod.config import RunConfig
from aiosod.data.loading import PairedBatch, assemble_batch, load_sample
from aiosod.data.manifest import SampleRecord
from aiosod.data.sampler import load_draw, mixed_sampler
from aiosod.model.network import AiOSOD, model_forward
from aiosod.training.checkpoint import checkpoint_load, checkpoint_save, restore
from aiosod.training.loss import bce_loss
from aiosod.training.schedule import lr_schedule

log = logging.getLogger(__name__)

LOG_HEADER = "step\tmodality\tloss\tlr"


class NonFiniteLoss(FloatingPointError):
    def __init__(self, step, sample_ids, loss):
        self.step, self.sample_ids, self.loss = step, list(sample_ids), loss
        super().__init__(f"non-finite loss {loss} at step {step} on batch {', '.join(self.sample_ids)}")


@dataclass
class TrainState:
    model: AiOSOD
    optimizer: torch.optim.Optimizer
    config: RunConfig
    step: int = 0
    history: list = field(default_factory=list)


def make_optimizer(model, config: RunConfig) -> torch.optim.Adam:
    t = config.train
    return torch.optim.Adam(model.parameters(), lr=t.lr0, betas=tuple(t.adam_betas), eps=t.adam_eps,
                            weight_decay=0.0)


def init_state(config: RunConfig, dtype=torch.float32) -> TrainState:
    model = AiOSOD.build(config.model, dtype=dtype)
    model.train()
    return TrainState(model, make_optimizer(model, config), config)


def train_step(state: TrainState, batch: PairedBatch, lr: float | None = None):
    """One Adam update against the BCE of the batch. Returns (state, loss)."""
    lr = lr_schedule(state.step, state.config.train) if lr is None else lr
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.zero_grad(set_to_none=True)
    pred = model_forward(state.model, batch)
    gts = torch.as_tensor(batch.gts).to(pred.dtype)
    loss = bce_loss(pred, gts)
    value = float(loss.detach())
    if not math.isfinite(value):
        raise NonFiniteLoss(state.step, batch.sample_ids, value)
    loss.backward()
    state.optimizer.step()
    state.step += 1
    return state, value


def format_log(step: int, modality: str, loss: float, lr: float) -> str:
    return f"{step}\t{modality}\t{loss!r}\t{lr!r}"


def parse_log(lines) -> list[tuple[int, str, float, float]]:
    rows = []
    for line in lines:
        line = line.strip()
        if not line or line == LOG_HEADER:
            continue
        step, modality, loss, lr = line.split("\t")
        rows.append((int(step), modality, float(loss), float(lr)))
    return rows


def latest_checkpoint(run_dir) -> Path | None:
    found = sorted(Path(run_dir).glob("ckpt-*.npz"))
    return found[-1] if found else None


def checkpoint_name(step: int) -> str:
    return f"ckpt-{step:08d}.npz"


def train(config: RunConfig, datasets: Sequence[Sequence[SampleRecord]], run_dir, steps: int | None = None,
          resume: bool = False, on_step: Callable[[int, str, float, float], None] | None = None) -> TrainState:
    """Run the training loop, appending to ``run_dir/train.log`` and writing checkpoints.

    With ``resume`` the newest checkpoint in ``run_dir`` is restored and the
    sampler is fast-forwarded, so the continued run sees the same batches as
    an uninterrupted one.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    total = config.train.total_steps if steps is None else steps
    # nothing in the step draws from torch's global generator today, but seed it
    # so any future use (dropout, say) stays reproducible and checkpoints match
    torch.manual_seed(config.train.seed)
    state = init_state(config)
    log_path = run_dir / "train.log"
    if resume:
        ckpt_path = latest_checkpoint(run_dir)
        if ckpt_path is None:
            raise FileNotFoundError(f"no checkpoint to resume from in {run_dir}")
        ckpt = checkpoint_load(ckpt_path, expect=config.model)
        restore(ckpt, state.model, state.optimizer)
        state.step = ckpt.step
        _truncate_log(log_path, state.step)
        log.info("resumed from %s at step %d", ckpt_path, state.step)
    elif not log_path.exists():
        log_path.write_text(LOG_HEADER + "\n", encoding="utf-8")
    t, d = config.train, config.data
    stream = mixed_sampler(datasets, t.batch_size, t.seed, start=state.step)
    with open(log_path, "a", encoding="utf-8") as fh:
        while state.step < total:
            draw = next(stream)
            batch = load_draw(draw, t.seed, config.model.input_size, "train", d.mean, d.std, d.hflip)
            lr = lr_schedule(state.step, t)
            step = state.step
            state, loss = train_step(state, batch, lr)
            fh.write(format_log(step, batch.modality, loss, lr) + "\n")
            fh.flush()
            state.history.append(loss)
            if on_step is not None:
                on_step(step, batch.modality, loss, lr)
            if state.step % t.checkpoint_every == 0 or state.step == total:
                checkpoint_save(run_dir / checkpoint_name(state.step), state.model, state.optimizer,
                                state.step, config)
    return state


def _truncate_log(path: Path, step: int) -> None:
    """Drop log lines at or beyond ``step`` (written after the checkpoint being resumed)."""
    if not path.exists():
        path.write_text(LOG_HEADER + "\n", encoding="utf-8")
        return
    keep = [LOG_HEADER]
    for line in path.read_text(encoding="utf-8").splitlines():
        if line and line != LOG_HEADER and int(line.split("\t", 1)[0]) < step:
            keep.append(line)
    path.write_text("\n".join(keep) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- overfit harness

def fixed_batches(records: Sequence[SampleRecord], batch_size: int, size: int) -> list[PairedBatch]:
    """Eval-mode (uncropped) batches, one modality per batch, in record order."""
    groups: dict[str, list] = {}
    for r in records:
        groups.setdefault(r.modality, []).append(load_sample(r, "eval", size=size))
    batches = []
    for modality, samples in groups.items():
        for i in range(0, len(samples), batch_size):
            batches.append(assemble_batch(samples[i:i + batch_size], modality))
    return batches


@torch.no_grad()
def mean_loss(model, batches) -> float:
    """Pixel-mean BCE over every pair in ``batches``."""
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    for b in batches:
        pred = model_forward(model, b)
        total += float(bce_loss(pred, torch.as_tensor(b.gts).to(pred.dtype))) * b.size
        count += b.size
    model.train(was_training)
    return total / count


def overfit(config: RunConfig, records: Sequence[SampleRecord], max_steps: int = 2000, target: float = 0.05,
            check_every: int = 25):
    """Train on a fixed set of pairs until their mean BCE drops below ``target``.

    Returns ``(final_loss, steps_taken, losses)`` where ``losses`` holds the
    full-set BCE at every check.
    """
    batches = fixed_batches(records, config.train.batch_size, config.model.input_size)
    state = init_state(config)
    losses = []
    current = mean_loss(state.model, batches)
    while state.step < max_steps:
        batch = batches[state.step % len(batches)]
        state, _ = train_step(state, batch)
        if state.step % check_every == 0 or state.step == max_steps:
            current = mean_loss(state.model, batches)
            losses.append((state.step, current))
            if current < target:
                break
    return current, state.step, losses
