"""Server-side global alignment of the aggregated model under the frozen teacher."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DatasetError, ShapeError
from .numerics import cross_entropy, kl_divergence
from .teacher import teacher_logits
from .training import sgd_fit


@dataclass(frozen=True)
class AlignConfig:
    beta: float = 1.0
    lr: float = 0.05
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


def align_loss(student_logits, teacher_logits_, label, beta):
    """``CE(label, p) + beta * KL(softmax(q) || softmax(p))`` and its gradient in p."""
    p = np.asarray(student_logits, dtype=np.float64)
    q = np.asarray(teacher_logits_, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"student logits {p.shape} vs teacher logits {q.shape}")
    ce, g_ce = cross_entropy(p, label)
    if beta == 0:
        return ce, g_ce
    kl, g_kl = kl_divergence(q, p)
    return ce + beta * kl, g_ce + beta * g_kl


def global_align(agg_params, teacher, align_set, cfg):
    """SGD on the alignment loss over a class-balanced alignment set."""
    counts = align_set.class_counts
    if counts.min() != counts.max():
        raise DatasetError(f"alignment set is not class-balanced: {counts.tolist()}")
    if teacher.num_classes != agg_params.out_dim:
        raise ShapeError(
            f"teacher predicts {teacher.num_classes} classes, model {agg_params.out_dim}"
        )
    q = teacher_logits(teacher, align_set.X) if cfg.beta != 0 else None
    params, _ = sgd_fit(agg_params, align_set.X, align_set.y, epochs=cfg.epochs, lr=cfg.lr,
                        batch_size=cfg.batch_size, seed=cfg.seed, teacher_logits=q,
                        beta=cfg.beta, context="global alignment")
    return params
