"""Step-decay learning-rate schedule."""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .training import TrainingConfig


def lr_at_epoch(cfg: "TrainingConfig", epoch: int) -> float:
    """`initial_lr * decay_factor ** (epoch // decay_period_epochs)`.

    Evaluated by repeated multiplication rather than floating-point
    exponentiation, so decimal settings stay exact: with (0.01, x0.1,
    period 10) epochs 0-9 give 0.01, 10-19 give 0.001, 20-29 give 0.0001 —
    as literals, not merely within tolerance.
    """
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    lr = cfg.initial_lr
    for _ in range(epoch // cfg.decay_period_epochs):
        lr *= cfg.decay_factor
    return lr
