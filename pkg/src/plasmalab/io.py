"""CSV and JSON emitters for configurations, samples, densities and reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def write_configuration_csv(path, cfg) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y"])
        for i, (x, y) in enumerate(np.asarray(cfg, dtype=float)):
            w.writerow([i, repr(float(x)), repr(float(y))])
    return path


def read_configuration_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"index", "x", "y"}:
        raise ValueError(f"{path}: expected header index,x,y")
    rows.sort(key=lambda r: int(r["index"]))
    return np.array([[float(r["x"]), float(r["y"])] for r in rows])


def write_samples_csv(path, samples, steps=None) -> Path:
    """Stream samples as ``step,particle,x,y`` rows."""
    path = Path(path)
    samples = np.asarray(samples, dtype=float)
    if steps is None:
        steps = range(len(samples))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "particle", "x", "y"])
        for step, cfg in zip(steps, samples):
            for k, (x, y) in enumerate(cfg):
                w.writerow([int(step), k, repr(float(x)), repr(float(y))])
    return path


def write_rows_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        # JSON has no infinities; keep them readable
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path
