"""Three-stage experiment: teacher, optional pretraining, FedAvg, optional alignment.

All randomness comes from ``cfg.seed`` through named sub-streams, so
switching pretraining or alignment on or off leaves the data, partition,
client selection and classifier initialisation untouched.
"""
from __future__ import annotations

import json
import os
import platform
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from . import __version__, checkpoint, kernels
from ._seeding import derive_seed, stream
from .align import AlignConfig, global_align
from .datagen import (LongTailSpec, apply_long_tail, build_alignment_set,
                      dirichlet_partition, generate_synthetic, split_server_reserve)
from .errors import FedTeachError
from .evaluation import ConfusionMatrix, GroupThresholds, confusion_csv, evaluate, group_accuracy, metrics_dict
from .fedcore import FedConfig, run_federated
from .idx import load_idx
from .numerics import init_mlp, stack
from .pretrain import MixSchedule, PretrainConfig, pretrain_student
from .teacher import load_teacher, save_teacher, train_teacher


@dataclass
class DataSplits:
    pool: object
    test: object
    client_data: object
    server_pool: object
    partition: object
    align_set: object


@dataclass
class PipelineResult:
    data: DataSplits
    teacher: object
    encoder: object
    federated: object
    aligned: object
    records: list
    metrics: dict
    pretrain_trace: object = None


@dataclass
class RunManifest:
    config: dict
    artifacts: dict = field(default_factory=dict)
    stage_seconds: dict = field(default_factory=dict)
    version: dict = field(default_factory=dict)
    status: str = "running"
    failed_stage: str = None
    error: str = None
    traceback: str = None
    partial: bool = False

    def to_dict(self):
        return {
            "config": self.config,
            "artifacts": self.artifacts,
            "stage_seconds": self.stage_seconds,
            "version": self.version,
            "status": self.status,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "traceback": self.traceback,
            "partial": self.partial,
        }


def version_stamp():
    return {
        "package": __version__,
        "kernel_backend": kernels.backend_name(),
        "numpy": np.__version__,
        "python": platform.python_version(),
    }


def prepare_data(cfg):
    dc = cfg.data
    if dc.source == "synthetic":
        data_seed = derive_seed(cfg.seed, "data")
        pool = generate_synthetic(dc.num_classes, dc.dim, dc.n_per_class,
                                  dc.class_separation, data_seed, split="train")
        test = generate_synthetic(dc.num_classes, dc.dim, dc.test_per_class,
                                  dc.class_separation, data_seed, split="test")
    else:
        pool = load_idx(dc.train_images, dc.train_labels)
        test = load_idx(dc.test_images, dc.test_labels, num_classes=pool.num_classes)
    client_pool, server_pool = split_server_reserve(pool, dc.server_fraction,
                                                    stream(cfg.seed, "server_split"))
    spec = LongTailSpec(cfg.long_tail.imbalance_factor, cfg.long_tail.max_per_class)
    client_data = apply_long_tail(client_pool, spec, stream(cfg.seed, "long_tail"))
    partition = dirichlet_partition(client_data, cfg.partition.num_clients,
                                    cfg.partition.concentration, stream(cfg.seed, "partition"))
    align_set = None
    if cfg.alignment.enabled:
        align_set = build_alignment_set(server_pool, cfg.alignment.per_class,
                                        stream(cfg.seed, "align_set"))
    return DataSplits(pool, test, client_data, server_pool, partition, align_set)


def build_teacher(cfg, data):
    tc = cfg.teacher
    if tc.checkpoint:
        return load_teacher(tc.checkpoint)
    return train_teacher(data.pool, tc.epochs, tc.lr, derive_seed(cfg.seed, "teacher"),
                         eval_data=data.test, hidden=tuple(tc.hidden),
                         feature_dim=tc.feature_dim, projector_dim=tc.projector_dim,
                         head_hidden=tc.head_hidden, batch_size=tc.batch_size)


def _round_metrics(test, train_counts, thr):
    def fn(params):
        acc, cm = evaluate(params, test)
        return {"accuracy": acc, "groups": group_accuracy(cm, train_counts, thr)._asdict()}
    return fn


class _Stages:
    """Times each stage and records a failure without losing earlier artifacts."""

    def __init__(self, manifest):
        self.manifest = manifest

    def run(self, name, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            self.manifest.status = "failed"
            self.manifest.failed_stage = name
            self.manifest.error = f"{type(exc).__name__}: {exc}"
            self.manifest.partial = True
            raise
        finally:
            self.manifest.stage_seconds[name] = round(time.perf_counter() - start, 6)


def run_stages(cfg, out_dir=None, manifest=None, teacher=None):
    """Execute every stage in memory; write artifacts when ``out_dir`` is given."""
    manifest = manifest or RunManifest(config=cfg.to_dict())
    stages = _Stages(manifest)
    art = manifest.artifacts

    def path(name):
        p = os.path.join(out_dir, name)
        art[name.split(".")[0]] = p
        return p

    data = stages.run("data", prepare_data, cfg)
    thr = GroupThresholds(cfg.eval.many_min, cfg.eval.few_max)
    train_counts = data.client_data.class_counts

    if teacher is None:
        teacher = stages.run("teacher", build_teacher, cfg, data)
    if out_dir:
        save_teacher(path("teacher.json"), teacher)

    feat = teacher.feature_dim
    encoder = init_mlp((data.pool.dim, *cfg.student.hidden, feat),
                       stream(cfg.seed, "student_init"),
                       ["relu"] * len(cfg.student.hidden) + ["linear"])
    trace = None
    if cfg.pretrain.enabled:
        pc = cfg.pretrain
        pcfg = PretrainConfig(lr=pc.lr, batch_size=pc.batch_size, epochs=pc.epochs,
                              seed=derive_seed(cfg.seed, "pretrain"),
                              schedule=MixSchedule(pc.epochs, pc.ramp_epochs))
        encoder, trace = stages.run("pretrain", pretrain_student, encoder, teacher,
                                    data.pool, pcfg)
        if out_dir:
            checkpoint.save(path("pretrained.json"), {"student": encoder}, "pretrained",
                            {"epoch_losses": trace.epoch_losses})

    classifier = init_mlp((feat, data.pool.num_classes), stream(cfg.seed, "classifier_init"),
                          ["linear"])
    model = stack(encoder, classifier)
    fc = cfg.federated
    fcfg = FedConfig(num_clients=cfg.partition.num_clients, fraction=fc.fraction,
                     rounds=fc.rounds, local_epochs=fc.local_epochs, lr=fc.lr,
                     batch_size=fc.batch_size, seed=derive_seed(cfg.seed, "federated"))
    log = open(path("rounds.jsonl"), "w") if out_dir else None
    try:
        federated, records = stages.run(
            "federated", run_federated, model, fcfg, data.partition, data.client_data,
            evaluate=_round_metrics(data.test, train_counts, thr), log=log,
        )
    finally:
        if log is not None:
            log.close()
    if out_dir:
        checkpoint.save(path("federated.json"), {"model": federated}, "federated")

    aligned = None
    if cfg.alignment.enabled:
        ac = cfg.alignment
        acfg = AlignConfig(beta=ac.beta, lr=ac.lr, epochs=ac.epochs, batch_size=ac.batch_size,
                           seed=derive_seed(cfg.seed, "align"))
        aligned = stages.run("align", global_align, federated, teacher, data.align_set, acfg)
        if out_dir:
            checkpoint.save(path("aligned.json"), {"model": aligned}, "aligned",
                            {"beta": ac.beta, "lr": ac.lr, "epochs": ac.epochs})

    def final_metrics():
        final = aligned if aligned is not None else federated
        m = {
            "final_stage": "aligned" if aligned is not None else "federated",
            "final": metrics_dict(final, data.test, train_counts, thr),
            "per_round_accuracy": [r.metrics["accuracy"] for r in records],
            "teacher": {k: teacher.metadata.get(k) for k in
                        ("heldout_accuracy", "task_head_heldout_accuracy")},
        }
        if aligned is not None:
            m["before_alignment"] = metrics_dict(federated, data.test, train_counts, thr)
        if trace is not None:
            m["pretrain_epoch_losses"] = trace.epoch_losses
        return m

    metrics = stages.run("eval", final_metrics)
    return PipelineResult(data, teacher, encoder, federated, aligned, records, metrics, trace)


def _write_outputs(out_dir, result, manifest):
    art = manifest.artifacts
    m = result.metrics
    art["metrics"] = os.path.join(out_dir, "metrics.json")
    with open(art["metrics"], "w") as f:
        json.dump(m, f, sort_keys=True, indent=1)
    art["confusion"] = os.path.join(out_dir, "confusion.csv")
    with open(art["confusion"], "w") as f:
        f.write(confusion_csv(ConfusionMatrix(m["final"]["confusion"])))
    art["accuracy_curve"] = os.path.join(out_dir, "accuracy.csv")
    with open(art["accuracy_curve"], "w") as f:
        f.write("round,accuracy,many,medium,few\n")
        for r in result.records:
            g = r.metrics["groups"]
            cells = ["" if g[k] is None else repr(g[k]) for k in ("many", "medium", "few")]
            f.write(f"{r.round},{r.metrics['accuracy']!r}," + ",".join(cells) + "\n")


def write_manifest(out_dir, manifest):
    p = os.path.join(out_dir, "manifest.json")
    with open(p, "w") as f:
        json.dump(manifest.to_dict(), f, sort_keys=True, indent=1)
    return p


def run_pipeline(cfg):
    """Run everything and write artifacts under ``cfg.output_dir``.

    Returns the manifest; on a stage failure the manifest is still written
    (status ``failed``, ``partial`` true) before the error propagates.
    """
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(config=cfg.to_dict(), version=version_stamp())
    try:
        result = run_stages(cfg, out_dir, manifest)
        _write_outputs(out_dir, result, manifest)
        manifest.status = "ok"
    except Exception as exc:
        if manifest.status != "failed":
            manifest.status = "failed"
            manifest.partial = True
            manifest.error = f"{type(exc).__name__}: {exc}"
        manifest.traceback = traceback.format_exc()
        write_manifest(out_dir, manifest)
        raise
    write_manifest(out_dir, manifest)
    return manifest


def run_teacher_only(cfg):
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    data = prepare_data(cfg)
    teacher = build_teacher(cfg, data)
    p = os.path.join(out_dir, "teacher.json")
    save_teacher(p, teacher)
    return p, teacher


# ---- comparison -----------------------------------------------------------

def _load_metrics(manifest):
    if isinstance(manifest, str):
        with open(manifest) as f:
            manifest = json.load(f)
    try:
        mpath = manifest["artifacts"]["metrics"]
    except KeyError:
        raise FedTeachError("manifest has no metrics artifact") from None
    with open(mpath) as f:
        return json.load(f)


def _delta(a, b):
    if a is None or b is None:
        return None
    return b - a


def _sign(d):
    if d is None:
        return "n/a"
    return "+" if d > 0 else "-" if d < 0 else "0"


def compare_metrics(ma, mb):
    """Deltas ``b - a`` of accuracy, group and per-class accuracies, with signs."""
    fa, fb = ma["final"], mb["final"]
    if len(fa["per_class_accuracy"]) != len(fb["per_class_accuracy"]):
        raise FedTeachError(
            f"runs disagree on class count: {len(fa['per_class_accuracy'])} vs "
            f"{len(fb['per_class_accuracy'])}"
        )
    rows = {"accuracy": (fa["accuracy"], fb["accuracy"])}
    for g in ("all", "many", "medium", "few"):
        rows[f"group.{g}"] = (fa["groups"][g], fb["groups"][g])
    for k, (a, b) in enumerate(zip(fa["per_class_accuracy"], fb["per_class_accuracy"])):
        rows[f"class.{k}"] = (a, b)
    report = {}
    for key, (a, b) in rows.items():
        d = _delta(a, b)
        report[key] = {"a": a, "b": b, "delta": d, "sign": _sign(d)}
    return report


def compare_runs(manifest_a, manifest_b):
    return compare_metrics(_load_metrics(manifest_a), _load_metrics(manifest_b))


def format_report(report):
    lines = [f"{'metric':<14}{'a':>10}{'b':>10}{'delta':>10}  sign"]
    fmt = lambda v: "n/a" if v is None else f"{v:.4f}"
    for key, r in report.items():
        lines.append(f"{key:<14}{fmt(r['a']):>10}{fmt(r['b']):>10}{fmt(r['delta']):>10}  {r['sign']}")
    return "\n".join(lines)
