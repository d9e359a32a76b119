"""Experiment configuration: nested blocks with explicit defaults.

Every field has a default, and ``to_dict`` echoes all of them, so the
resolved snapshot stored with a run fully determines it.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import List, Optional

import yaml

from .errors import ConfigError

OUTPUT_ROOT_ENV = "FEDTEACH_OUTPUT_ROOT"


@dataclass
class DataBlock:
    source: str = "synthetic"
    num_classes: int = 10
    dim: int = 16
    n_per_class: int = 600
    class_separation: float = 2.5
    test_per_class: int = 100
    server_fraction: float = 0.1
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None


@dataclass
class LongTailBlock:
    imbalance_factor: float = 100.0
    max_per_class: int = 500


@dataclass
class PartitionBlock:
    num_clients: int = 20
    concentration: float = 0.5


@dataclass
class TeacherBlock:
    hidden: List[int] = field(default_factory=lambda: [64, 64])
    feature_dim: int = 16
    projector_dim: int = 16
    head_hidden: int = 32
    epochs: int = 20
    lr: float = 0.05
    batch_size: int = 64
    checkpoint: Optional[str] = None


@dataclass
class StudentBlock:
    hidden: List[int] = field(default_factory=lambda: [16])


@dataclass
class PretrainBlock:
    enabled: bool = True
    epochs: int = 8
    ramp_epochs: int = 4
    lr: float = 0.05
    batch_size: int = 32


@dataclass
class FederatedBlock:
    rounds: int = 30
    fraction: float = 0.4
    local_epochs: int = 1
    lr: float = 0.05
    batch_size: int = 32


@dataclass
class AlignmentBlock:
    enabled: bool = True
    beta: float = 1.0
    lr: float = 0.05
    epochs: int = 5
    batch_size: int = 32
    per_class: int = 20


@dataclass
class EvalBlock:
    many_min: int = 100
    few_max: int = 20


@dataclass
class ExperimentConfig:
    data: DataBlock = field(default_factory=DataBlock)
    long_tail: LongTailBlock = field(default_factory=LongTailBlock)
    partition: PartitionBlock = field(default_factory=PartitionBlock)
    teacher: TeacherBlock = field(default_factory=TeacherBlock)
    student: StudentBlock = field(default_factory=StudentBlock)
    pretrain: PretrainBlock = field(default_factory=PretrainBlock)
    federated: FederatedBlock = field(default_factory=FederatedBlock)
    alignment: AlignmentBlock = field(default_factory=AlignmentBlock)
    eval: EvalBlock = field(default_factory=EvalBlock)
    seed: int = 0
    output_dir: str = "runs/default"

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return _build(cls, d or {}, "")

    def validate(self):
        if self.data.source not in ("synthetic", "idx"):
            raise ConfigError(f"data.source must be 'synthetic' or 'idx', not {self.data.source!r}")
        if self.data.source == "idx":
            missing = [k for k in ("train_images", "train_labels", "test_images", "test_labels")
                       if getattr(self.data, k) is None]
            if missing:
                raise ConfigError(f"idx source needs data.{', data.'.join(missing)}")
        if self.pretrain.enabled and not 0 < self.pretrain.ramp_epochs <= self.pretrain.epochs:
            raise ConfigError("pretrain.ramp_epochs must be in (0, pretrain.epochs]")
        if not 0 < self.federated.fraction <= 1:
            raise ConfigError("federated.fraction must be in (0, 1]")
        if self.alignment.beta < 0:
            raise ConfigError("alignment.beta must be >= 0")
        if self.eval.few_max > self.eval.many_min:
            raise ConfigError("eval.few_max must not exceed eval.many_min")
        return self


def _build(cls, d, prefix):
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in d.items():
        f = known[name]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{prefix}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def parse_override(text):
    """``"federated.rounds=10"`` -> (["federated", "rounds"], 10)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    return key.strip().split("."), yaml.safe_load(raw)


def apply_overrides(d, overrides):
    d = json.loads(json.dumps(d))
    for text in overrides:
        path, value = parse_override(text)
        node = d
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r} walks into a scalar")
        node[path[-1]] = value
    return d


def read_config_file(path):
    """YAML or JSON config. A run manifest is accepted too; its resolved
    ``config`` snapshot is used so a run can be repeated from its manifest."""
    with open(path) as f:
        doc = yaml.safe_load(f) or {}
    if isinstance(doc, dict) and "config" in doc and "artifacts" in doc:
        doc = doc["config"]
    return doc


def load_config(path=None, overrides=(), output_dir=None):
    doc = read_config_file(path) if path else {}
    doc = apply_overrides(doc, overrides)
    cfg = ExperimentConfig.from_dict(doc)
    if output_dir is not None:
        cfg.output_dir = output_dir
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(cfg.output_dir):
        cfg.output_dir = os.path.join(root, cfg.output_dir)
    return cfg.validate()
