"""Versioned JSON parameter files shared by teacher, student and aligned checkpoints.

Floats are written with ``repr`` precision so a save/load round trip is
bit-exact, and keys are sorted so identical models give identical bytes.
"""
import json

import numpy as np

from .errors import CheckpointError
from .numerics import MlpParams

FORMAT = "fedteach-params"
FORMAT_VERSION = 1


def params_to_dict(params):
    return {
        "sizes": list(params.sizes),
        "activations": list(params.activations),
        "values": params.flat.tolist(),
    }


def params_from_dict(d):
    try:
        return MlpParams(tuple(d["sizes"]), tuple(d["activations"]),
                         np.asarray(d["values"], dtype=np.float64))
    except KeyError as exc:
        raise CheckpointError(f"model entry missing field {exc}") from None


def dumps(models, stage, metadata=None):
    doc = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "stage": stage,
        "models": {name: params_to_dict(p) for name, p in models.items()},
        "metadata": metadata or {},
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not a JSON parameter file: {exc}") from None
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"unknown format {doc.get('format')!r}")
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"format version {doc.get('format_version')} unsupported (want {FORMAT_VERSION})"
        )
    models = {name: params_from_dict(m) for name, m in doc["models"].items()}
    return models, doc["stage"], doc.get("metadata", {})


def save(path, models, stage, metadata=None):
    with open(path, "w") as f:
        f.write(dumps(models, stage, metadata))


def load(path):
    with open(path) as f:
        return loads(f.read())
