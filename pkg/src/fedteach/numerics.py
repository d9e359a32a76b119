"""Dense feed-forward networks with exact manual gradients.

All values are float64. A network is stored as one flat parameter buffer so
that aggregation, checkpoints and SGD updates are plain vector operations;
``MlpParams.layers`` exposes (weight, bias) views into that buffer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError

ACTIVATIONS = ("relu", "linear")


def param_count(sizes):
    return sum(sizes[i + 1] * sizes[i] + sizes[i + 1] for i in range(len(sizes) - 1))


@dataclass(eq=False)
class MlpParams:
    """Layer widths, per-layer activation tags and the flat parameter buffer.

    ``sizes`` has one more entry than ``activations``: layer ``l`` maps
    ``sizes[l]`` inputs to ``sizes[l+1]`` outputs then applies
    ``activations[l]``.
    """

    sizes: tuple
    activations: tuple
    flat: np.ndarray

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.activations = tuple(self.activations)
        if len(self.sizes) < 2:
            raise ShapeError("a network needs at least one layer")
        if any(s < 1 for s in self.sizes):
            raise ShapeError(f"layer widths must be positive, got {self.sizes}")
        if len(self.activations) != len(self.sizes) - 1:
            raise ShapeError(
                f"{len(self.sizes) - 1} layers but {len(self.activations)} activation tags"
            )
        for l, act in enumerate(self.activations):
            if act not in ACTIVATIONS:
                raise ShapeError(f"unknown activation {act!r}", layer=l)
        flat = np.asarray(self.flat, dtype=np.float64)
        if flat.ndim != 1 or flat.size != param_count(self.sizes):
            raise ShapeError(
                f"flat buffer has {flat.size} values, sizes {self.sizes} need "
                f"{param_count(self.sizes)}"
            )
        self.flat = flat
        self._sizes_arr = np.asarray(self.sizes, dtype=np.int64)
        self._relu_arr = np.asarray([a == "relu" for a in self.activations], dtype=np.bool_)

    @classmethod
    def from_layers(cls, layers, activations=None):
        layers = [(np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64))
                  for W, b in layers]
        sizes = [layers[0][0].shape[1]]
        for l, (W, b) in enumerate(layers):
            if W.ndim != 2 or W.shape[1] != sizes[-1]:
                raise ShapeError(
                    f"weight shape {W.shape} does not accept {sizes[-1]} inputs", layer=l
                )
            if b.shape != (W.shape[0],):
                raise ShapeError(f"bias shape {b.shape} for {W.shape[0]} outputs", layer=l)
            sizes.append(W.shape[0])
        if activations is None:
            activations = ["relu"] * (len(layers) - 1) + ["linear"]
        flat = np.concatenate([np.concatenate([W.ravel(), b]) for W, b in layers])
        return cls(tuple(sizes), tuple(activations), flat)

    @property
    def layers(self):
        return kernels._numpy.layer_views(self.flat, self.sizes)

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def copy(self):
        return MlpParams(self.sizes, self.activations, self.flat.copy())

    def with_flat(self, flat):
        return MlpParams(self.sizes, self.activations, flat)

    def same_shape(self, other):
        return self.sizes == other.sizes and self.activations == other.activations

    def frozen(self):
        """A read-only copy; in-place writes to it raise."""
        flat = self.flat.copy()
        flat.flags.writeable = False
        return MlpParams(self.sizes, self.activations, flat)

    def __eq__(self, other):
        if not isinstance(other, MlpParams):
            return NotImplemented
        return self.same_shape(other) and np.array_equal(self.flat, other.flat)

    def __hash__(self):
        return hash((self.sizes, self.activations, self.flat.tobytes()))


# Gradients share the parameter layout exactly.
GradientRecord = MlpParams


def init_mlp(sizes, rng, activations=None):
    """He-normal weights and zero biases."""
    layers = []
    for l in range(len(sizes) - 1):
        W = rng.normal(0.0, np.sqrt(2.0 / sizes[l]), size=(sizes[l + 1], sizes[l]))
        layers.append((W, np.zeros(sizes[l + 1])))
    return MlpParams.from_layers(layers, activations)


def stack(first, second):
    """Network computing ``second(first(x))``; parameters are copied."""
    if first.out_dim != second.in_dim:
        raise ShapeError(
            f"cannot feed {first.out_dim} outputs into {second.in_dim} inputs",
            layer=first.n_layers,
        )
    return MlpParams(
        first.sizes + second.sizes[1:],
        first.activations + second.activations,
        np.concatenate([first.flat, second.flat]),
    )


def split(params, n_first):
    """Inverse of ``stack``: the first ``n_first`` layers and the rest."""
    if not 0 < n_first < params.n_layers:
        raise ShapeError(f"cannot split {params.n_layers} layers at {n_first}")
    cut = param_count(params.sizes[:n_first + 1])
    head = MlpParams(params.sizes[:n_first + 1], params.activations[:n_first],
                     params.flat[:cut].copy())
    tail = MlpParams(params.sizes[n_first:], params.activations[n_first:],
                     params.flat[cut:].copy())
    return head, tail


def _as_batch(params, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != params.in_dim:
        raise ShapeError(
            f"input width {X.shape[-1]} does not match {params.in_dim} inputs", layer=0
        )
    return X, single


def forward(params, x):
    """Final-layer pre-activation output for a vector or a (batch, dim) matrix."""
    X, single = _as_batch(params, x)
    out = kernels.forward(params.flat, params._sizes_arr, params._relu_arr, X)
    return out[0] if single else out


def backward(params, x, upstream, return_input_grad=False):
    """Reverse-mode gradient of ``sum(upstream * forward(params, x))``.

    For batched input the per-example gradients are summed.
    """
    X, single = _as_batch(params, x)
    up = np.asarray(upstream, dtype=np.float64)
    up = up[None, :] if up.ndim == 1 else up
    if up.shape != (X.shape[0], params.out_dim):
        raise ShapeError(
            f"upstream gradient shape {up.shape} does not match output "
            f"({X.shape[0]}, {params.out_dim})",
            layer=params.n_layers - 1,
        )
    grad, dX = kernels.backward(params.flat, params._sizes_arr, params._relu_arr, X, up)
    record = GradientRecord(params.sizes, params.activations, grad)
    if return_input_grad:
        return record, (dX[0] if single else dX)
    return record


def _check_logits(logits):
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0 or z.shape[-1] == 0:
        raise ValueError("logits must be nonempty")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    return z


def log_softmax(logits):
    return kernels._numpy.log_softmax(_check_logits(logits))


def softmax(logits):
    z = _check_logits(logits)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, label):
    """Loss ``-log softmax(logits)[label]`` and its gradient w.r.t. the logits."""
    z = _check_logits(logits)
    if z.ndim != 1:
        raise ShapeError("cross_entropy takes a single logit vector")
    K = z.shape[0]
    if not 0 <= int(label) < K:
        raise ValueError(f"label {label} out of range for {K} classes")
    logp = kernels._numpy.log_softmax(z)
    grad = np.exp(logp)
    grad[int(label)] -= 1.0
    return float(-logp[int(label)]), grad


def kl_divergence(q_logits, p_logits):
    """KL(softmax(q) || softmax(p)) and its gradient w.r.t. ``p_logits`` only."""
    q = _check_logits(q_logits)
    p = _check_logits(p_logits)
    if q.shape != p.shape or q.ndim != 1:
        raise ShapeError(f"logit vectors differ in shape: {q.shape} vs {p.shape}")
    logq = kernels._numpy.log_softmax(q)
    logp = kernels._numpy.log_softmax(p)
    qprob = np.exp(logq)
    kl = float(np.sum(qprob * (logq - logp)))
    return max(kl, 0.0), np.exp(logp) - qprob
