"""Artifact serialization: JSON reports, CSV curves and field dumps.

Everything written here is diffable text (or raw float64 with a JSON
sidecar); reports are canonically ordered so identical runs produce
identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os

import numpy as np

from .grid import TruncatedBox

__all__ = [
    "sanitize",
    "canonical_json",
    "config_hash",
    "write_report",
    "write_field_csv",
    "write_field_binary",
    "read_field_binary",
    "write_decay_csv",
]


def sanitize(obj):
    """Make an object JSON-clean: numpy scalars/arrays out, non-finite
    floats to strings (strict JSON has no NaN/inf tokens)."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return {math.inf: "inf", -math.inf: "-inf"}.get(x, "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(sanitize(obj), indent=2, sort_keys=True)


def config_hash(config: dict) -> str:
    payload = json.dumps(sanitize(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def write_report(path, report: dict):
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(canonical_json(report))
        fh.write("\n")
    os.replace(tmp, path)


def write_field_csv(path, field):
    box = field.box
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(box.dimension)] + ["value"])
        for node, v in zip(box.nodes, field.values):
            w.writerow(list(node) + [repr(float(v))])


def write_field_binary(path, field):
    """Flat float64 dump plus a JSON sidecar declaring box and shape."""
    values = np.asarray(field.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(values.tobytes())
    sidecar = {
        "dtype": "<f8",
        "shape": list(values.shape),
        "order": "C",
        "time_tag": field.time_tag,
        "box": {
            "half_width": field.box.half_width,
            "cells_per_dim": field.box.cells_per_dim,
            "dimension": field.box.dimension,
        },
    }
    with open(str(path) + ".json", "w") as fh:
        fh.write(canonical_json(sidecar))
        fh.write("\n")


def read_field_binary(path):
    from .grid import GridField

    with open(str(path) + ".json") as fh:
        sidecar = json.load(fh)
    box = TruncatedBox(**sidecar["box"])
    values = np.frombuffer(open(path, "rb").read(), dtype=sidecar["dtype"])
    return GridField(values.copy(), box, sidecar.get("time_tag", 0.0))


def write_decay_csv(path, decay):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "e_n"])
        for n, e in enumerate(decay, start=1):
            w.writerow([n, repr(float(e))])
