"""Frozen teacher: encoder, projector, zero-shot head and the frozen task head.

The teacher stands in for a pretrained vision-language model. It is trained
once on balanced data, then every parameter buffer is made read-only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from ._seeding import stream
from .datagen import split_server_reserve
from .errors import CheckpointError
from .numerics import MlpParams, forward, init_mlp, split, stack
from .training import sgd_fit

MODEL_NAMES = ("encoder", "projector", "zero_shot_head", "task_head")


@dataclass(frozen=True)
class TeacherBundle:
    """``task_head`` consumes projector outputs; it is the frozen downstream
    head that pretraining pushes student features through."""

    encoder: MlpParams
    projector: MlpParams
    zero_shot_head: MlpParams
    task_head: MlpParams
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in MODEL_NAMES:
            object.__setattr__(self, name, getattr(self, name).frozen())
        if self.encoder.out_dim != self.zero_shot_head.in_dim:
            raise ValueError("zero-shot head must consume encoder features")
        if self.encoder.out_dim != self.projector.in_dim:
            raise ValueError("projector must consume encoder features")
        if self.projector.out_dim != self.task_head.in_dim:
            raise ValueError("task head must consume projector outputs")

    @property
    def feature_dim(self):
        return self.encoder.out_dim

    @property
    def num_classes(self):
        return self.zero_shot_head.out_dim

    def models(self):
        return {name: getattr(self, name) for name in MODEL_NAMES}

    def to_bytes(self):
        return checkpoint.dumps(self.models(), "teacher", self.metadata).encode()


def teacher_features(bundle, x):
    return forward(bundle.encoder, x)


def teacher_logits(bundle, x):
    return forward(bundle.zero_shot_head, teacher_features(bundle, x))


def train_teacher(train_data, epochs, lr, seed, *, eval_data=None, hidden=(64, 64),
                  feature_dim=16, projector_dim=16, head_hidden=32, batch_size=64,
                  head_epochs=None):
    """Train encoder + zero-shot head, then projector + task head on frozen features.

    Without ``eval_data`` a stratified 20% of ``train_data`` is held out to
    measure the accuracy stored in ``metadata["heldout_accuracy"]``.
    """
    if eval_data is None:
        train_data, eval_data = split_server_reserve(train_data, 0.2, stream(seed, "holdout"))
    K = train_data.num_classes
    d = train_data.dim
    enc_sizes = (d, *hidden, feature_dim)
    encoder = init_mlp(enc_sizes, stream(seed, "encoder_init"),
                       ["relu"] * len(hidden) + ["linear"])
    zs_head = init_mlp((feature_dim, K), stream(seed, "zero_shot_init"), ["linear"])
    net, losses = sgd_fit(stack(encoder, zs_head), train_data.X, train_data.y,
                          epochs=epochs, lr=lr, batch_size=batch_size,
                          seed=stream(seed, "encoder_sgd"), context="teacher encoder")
    encoder, zs_head = split(net, encoder.n_layers)

    feats = forward(encoder, train_data.X)
    projector = init_mlp((feature_dim, projector_dim), stream(seed, "projector_init"),
                         ["linear"])
    task_head = init_mlp((projector_dim, head_hidden, K), stream(seed, "task_head_init"),
                         ["relu", "linear"])
    head_net, head_losses = sgd_fit(
        stack(projector, task_head), feats, train_data.y,
        epochs=epochs if head_epochs is None else head_epochs, lr=lr,
        batch_size=batch_size, seed=stream(seed, "task_head_sgd"), context="teacher head",
    )
    projector, task_head = split(head_net, 1)

    eval_feats = forward(encoder, eval_data.X)
    zs_acc = float(np.mean(np.argmax(forward(zs_head, eval_feats), axis=1) == eval_data.y))
    head_acc = float(np.mean(
        np.argmax(forward(task_head, forward(projector, eval_feats)), axis=1) == eval_data.y
    ))
    metadata = {
        "heldout_accuracy": zs_acc,
        "task_head_heldout_accuracy": head_acc,
        "final_loss": float(losses[-1].mean()) if losses.size else None,
        "task_head_final_loss": float(head_losses[-1].mean()) if head_losses.size else None,
        "epochs": int(epochs),
        "lr": float(lr),
        "seed": int(seed),
    }
    return TeacherBundle(encoder, projector, zs_head, task_head, metadata)


def save_teacher(path, bundle):
    checkpoint.save(path, bundle.models(), "teacher", bundle.metadata)


def load_teacher(path):
    models, stage, metadata = checkpoint.load(path)
    if stage != "teacher" or set(models) != set(MODEL_NAMES):
        raise CheckpointError(f"{path} does not hold a teacher bundle")
    return TeacherBundle(**models, metadata=metadata)
