from __future__ import annotations

from decimal import Decimal

from aiosod.config import TrainConfig


def lr_schedule(step: int, config: TrainConfig | None = None) -> float:
    """Step decay: ``lr0 * factor**k`` where k counts the decay steps already passed.

    The product is formed in decimal so ``1e-4 * 0.1`` comes out as exactly
    the float ``1e-5`` rather than ``1.0000000000000002e-05``.
    """
    config = config or TrainConfig()
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    k = sum(step >= s for s in config.decay_steps)
    lr = Decimal(repr(config.lr0)) * Decimal(repr(config.decay_factor)) ** k
    return float(lr)
