"""SGD with heavy-ball momentum and reduce-on-plateau scheduling.

Weight decay is coupled (folded into the loss gradient upstream), so the
optimizer only ever sees the combined gradient. Skipped macrobatches must
leave every piece of optimizer and scheduler state untouched; the step
functions are pure, returning new state objects, which makes that easy to
assert bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .gradvec import GradVec
from .models import Params, unflatten_like


@dataclass(frozen=True)
class OptimState:
    lr: float
    momentum: float
    velocity: np.ndarray
    step_count: int = 0
    skip_count: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass(frozen=True)
class SchedState:
    """Reduce-on-plateau state for a higher-is-better metric."""

    patience: int
    factor: float
    min_lr: float = 1e-6
    min_delta: float = 1e-4
    best_metric: float = -math.inf
    bad_epochs: int = 0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError("factor must be in (0, 1)")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


def init_optim(lr: float, momentum: float, dim: int) -> OptimState:
    return OptimState(lr=lr, momentum=momentum, velocity=np.zeros(dim))


def sgd_step(params: Params, grad: GradVec, opt: OptimState) -> tuple[Params, OptimState]:
    """velocity <- momentum * velocity + grad; params <- params - lr * velocity."""
    flat = params.flatten()
    if grad.shape != flat.shape:
        raise ValueError(f"gradient dim {grad.shape[0]} does not match params {flat.shape[0]}")
    velocity = opt.momentum * opt.velocity + grad
    new_flat = flat - opt.lr * velocity
    new_params = unflatten_like(new_flat, params)
    return new_params, replace(opt, velocity=velocity, step_count=opt.step_count + 1)


def skip_step(opt: OptimState) -> OptimState:
    """No-consensus step: advance the skip counter, change nothing else."""
    return replace(opt, skip_count=opt.skip_count + 1)


def plateau_update(
    sched: SchedState, opt: OptimState, val_metric: float
) -> tuple[SchedState, OptimState]:
    """Feed one validation metric; cut the lr after too many stale evals.

    Improvement means exceeding the best seen metric by more than min_delta.
    Once bad_epochs exceeds patience the lr is multiplied by factor (floored
    at min_lr) and the stale counter resets.
    """
    if not math.isfinite(val_metric):
        raise ValueError("validation metric must be finite")
    if val_metric > sched.best_metric + sched.min_delta:
        return replace(sched, best_metric=val_metric, bad_epochs=0), opt
    bad = sched.bad_epochs + 1
    if bad > sched.patience:
        new_lr = max(opt.lr * sched.factor, sched.min_lr)
        return replace(sched, bad_epochs=0), replace(opt, lr=new_lr)
    return replace(sched, bad_epochs=bad), opt
