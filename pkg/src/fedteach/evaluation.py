"""Top-1 accuracy, confusion matrices and Many/Medium/Few group accuracy."""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ShapeError
from .numerics import forward


@dataclass(eq=False)
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ShapeError(f"confusion matrix must be square, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("confusion counts must be nonnegative")

    @property
    def num_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def row_sums(self):
        return self.counts.sum(axis=1)

    def accuracy(self):
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    def per_class_accuracy(self):
        rows = self.row_sums
        with np.errstate(invalid="ignore", divide="ignore"):
            acc = np.diag(self.counts) / rows
        return [float(a) if r else None for a, r in zip(acc, rows)]


@dataclass(frozen=True)
class GroupThresholds:
    """Classes with more than ``many_min`` training samples are Many, fewer
    than ``few_max`` are Few, the rest Medium."""

    many_min: int = 100
    few_max: int = 20

    def __post_init__(self):
        if self.few_max > self.many_min:
            raise ValueError("few_max must not exceed many_min")

    def groups(self, train_counts):
        c = np.asarray(train_counts)
        many = c > self.many_min
        few = c < self.few_max
        return many, ~(many | few), few


class GroupAccuracy(NamedTuple):
    all: float
    many: Optional[float]
    medium: Optional[float]
    few: Optional[float]


def confusion_from_predictions(y_true, y_pred, num_classes):
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return ConfusionMatrix(counts)


def predict(params, X):
    # np.argmax returns the first maximum, so ties go to the lowest class index
    return np.argmax(forward(params, X), axis=1)


def evaluate(params, test):
    if len(test) == 0:
        raise ValueError("test set is empty")
    if params.in_dim != test.dim:
        raise ShapeError(f"model takes {params.in_dim} inputs, data has {test.dim}", layer=0)
    if params.out_dim != test.num_classes:
        raise ShapeError(
            f"model predicts {params.out_dim} classes, data has {test.num_classes}",
            layer=params.n_layers - 1,
        )
    cm = confusion_from_predictions(test.y, predict(params, test.X), test.num_classes)
    return cm.accuracy(), cm


def _group_acc(cm, mask):
    if not mask.any():
        return None
    total = cm.row_sums[mask].sum()
    if total == 0:
        return None
    return float(np.diag(cm.counts)[mask].sum() / total)


def group_accuracy(confusion, train_counts, thr=GroupThresholds()):
    """Accuracy over all classes and per group; an empty group gives ``None``."""
    if len(train_counts) != confusion.num_classes:
        raise ShapeError(
            f"{len(train_counts)} train counts for {confusion.num_classes} classes"
        )
    many, medium, few = thr.groups(train_counts)
    return GroupAccuracy(confusion.accuracy(), _group_acc(confusion, many),
                         _group_acc(confusion, medium), _group_acc(confusion, few))


def normalize_confusion(cm):
    """Row-normalized matrix and a boolean mask of rows that had no examples.

    Empty rows stay all-zero instead of dividing by zero.
    """
    counts = cm.counts.astype(np.float64)
    rows = counts.sum(axis=1)
    empty = rows == 0
    out = np.zeros_like(counts)
    out[~empty] = counts[~empty] / rows[~empty, None]
    return out, empty


def metrics_dict(params, test, train_counts, thr=GroupThresholds()):
    acc, cm = evaluate(params, test)
    groups = group_accuracy(cm, train_counts, thr)
    normalized, empty = normalize_confusion(cm)
    return {
        "accuracy": acc,
        "groups": groups._asdict(),
        "per_class_accuracy": cm.per_class_accuracy(),
        "confusion": cm.counts.tolist(),
        "confusion_normalized": normalized.tolist(),
        "empty_rows": [int(i) for i in np.flatnonzero(empty)],
        "train_counts": [int(c) for c in train_counts],
    }


def confusion_csv(cm):
    buf = io.StringIO()
    K = cm.num_classes
    buf.write("true\\pred," + ",".join(str(k) for k in range(K)) + "\n")
    for k in range(K):
        buf.write(f"{k}," + ",".join(str(int(v)) for v in cm.counts[k]) + "\n")
    return buf.getvalue()
