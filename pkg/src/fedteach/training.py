"""Mini-batch SGD driver on top of the compiled kernels."""
import numpy as np

from . import kernels
from ._seeding import as_generator
from .errors import DivergenceError


def epoch_orders(rng, n, epochs):
    """One fresh permutation of ``range(n)`` per epoch, shape (epochs, n)."""
    if epochs == 0:
        return np.empty((0, n), dtype=np.int64)
    return np.stack([rng.permutation(n) for _ in range(epochs)]).astype(np.int64)


def sgd_fit(params, X, y, *, epochs, lr, batch_size, seed, teacher_logits=None,
            beta=0.0, context=""):
    """Run SGD on CE (+ beta * KL to ``teacher_logits``) and return (params, losses).

    ``params`` is not modified. ``losses`` has one row per epoch and one
    column per mini-batch. With ``beta == 0`` the teacher term is skipped
    entirely, so the update is exactly plain cross-entropy SGD.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    rng = as_generator(seed)
    n = len(y)
    orders = epoch_orders(rng, n, epochs)
    if teacher_logits is None:
        if beta != 0.0:
            raise ValueError("beta != 0 needs teacher logits")
        Q = np.zeros((n, params.out_dim))
    else:
        Q = np.asarray(teacher_logits, dtype=np.float64)
    flat = params.flat.copy()
    if epochs == 0 or n == 0:
        return params.with_flat(flat), np.empty((epochs, 0))
    losses = kernels.sgd_train(flat, params._sizes_arr, params._relu_arr, X, y, Q,
                               float(beta), orders, float(lr), int(min(batch_size, n)))
    bad = ~np.isfinite(losses)
    if bad.any() or not np.all(np.isfinite(flat)):
        e, b = np.argwhere(bad)[0] if bad.any() else (epochs - 1, losses.shape[1] - 1)
        where = f"{context}: " if context else ""
        raise DivergenceError(f"{where}non-finite loss at epoch {e}, batch {b}")
    return params.with_flat(flat), losses
