"""Dynamic weighted pretraining of the student encoder against the frozen teacher.

Each mini-batch mixes teacher and student features with weight ``alpha``,
sends the mix through the teacher's frozen projector and task head, and
updates only the student from the cross-entropy gradient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._seeding import as_generator
from .errors import DivergenceError, ShapeError
from .numerics import backward, forward
from .teacher import teacher_features
from .training import epoch_orders


@dataclass(frozen=True)
class MixSchedule:
    total_epochs: int
    ramp_epochs: int

    def __post_init__(self):
        if not 0 < self.ramp_epochs <= self.total_epochs:
            raise ValueError("need 0 < ramp_epochs <= total_epochs")


@dataclass(frozen=True)
class PretrainConfig:
    lr: float = 0.05
    batch_size: int = 32
    epochs: int = 8
    seed: int = 0
    schedule: Optional[MixSchedule] = None
    # pins alpha for every step; used for ablations and the no-gradient check
    fixed_alpha: Optional[float] = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.schedule is None:
            object.__setattr__(self, "schedule",
                               MixSchedule(self.epochs, max(1, self.epochs // 2)))
        if self.schedule.total_epochs != self.epochs:
            raise ValueError("schedule total_epochs must equal epochs")


@dataclass
class PretrainTrace:
    epoch_losses: list = field(default_factory=list)
    alphas: list = field(default_factory=list)


def alpha_at(schedule, progress):
    """Cosine ramp ``(1 - cos(pi * progress)) / 2`` over the ramp fraction."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"ramp progress {progress} outside [0, 1]")
    return (1.0 - math.cos(math.pi * progress)) / 2.0


def mixed_features(alpha, teacher_feat, student_feat):
    t = np.asarray(teacher_feat, dtype=np.float64)
    s = np.asarray(student_feat, dtype=np.float64)
    if t.shape != s.shape:
        raise ShapeError(f"teacher features {t.shape} vs student features {s.shape}")
    return (1.0 - alpha) * t + alpha * s


def composite_loss_grad(student, teacher, X, y, alpha):
    """Mean CE of task_head(projector(mix)) and its gradient w.r.t. the student.

    Returns ``(loss, student_gradient_flat)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    B = len(y)
    t_feat = teacher_features(teacher, X)
    s_feat = forward(student, X)
    z = mixed_features(alpha, t_feat, s_feat)
    h = forward(teacher.projector, z)
    logits = forward(teacher.task_head, h)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(B), y].sum() / B)
    dlogits = np.exp(logp)
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    _, dh = backward(teacher.task_head, h, dlogits, return_input_grad=True)
    _, dz = backward(teacher.projector, z, dh, return_input_grad=True)
    grad = backward(student, X, alpha * dz)
    return loss, grad.flat


def _alpha_for_step(cfg, step, steps_per_epoch):
    if cfg.fixed_alpha is not None:
        return float(cfg.fixed_alpha)
    ramp_steps = cfg.schedule.ramp_epochs * steps_per_epoch
    return alpha_at(cfg.schedule, min(1.0, step / ramp_steps))


def pretrain_student(student, teacher, data, cfg):
    """Train ``student`` (input dim -> teacher feature dim) and return (params, trace)."""
    if student.in_dim != data.dim:
        raise ShapeError(f"student takes {student.in_dim} inputs, data has {data.dim}",
                         layer=0)
    if student.out_dim != teacher.feature_dim:
        raise ShapeError(
            f"student emits {student.out_dim} features, teacher {teacher.feature_dim}",
            layer=student.n_layers - 1,
        )
    rng = as_generator(cfg.seed)
    n = len(data)
    bs = min(cfg.batch_size, n)
    steps_per_epoch = (n + bs - 1) // bs
    orders = epoch_orders(rng, n, cfg.epochs)
    params = student.copy()
    trace = PretrainTrace()
    step = 0
    for e in range(cfg.epochs):
        total = 0.0
        for b in range(steps_per_epoch):
            idx = orders[e, b * bs:(b + 1) * bs]
            alpha = _alpha_for_step(cfg, step, steps_per_epoch)
            loss, grad = composite_loss_grad(params, teacher, data.X[idx], data.y[idx], alpha)
            if not math.isfinite(loss):
                raise DivergenceError(f"pretraining: non-finite loss at epoch {e}, batch {b}")
            params.flat -= cfg.lr * grad
            trace.alphas.append(alpha)
            total += loss * len(idx)
            step += 1
        trace.epoch_losses.append(total / n)
    return params, trace
