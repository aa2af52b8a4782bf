"""Deterministic CSV/JSON emission with provenance headers.

Floats are written with 17 significant digits, keys keep insertion order,
and every file carries the package version and a hash of the run
configuration, so identical configurations produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import __version__

MODULES = ("ball_spectrum", "geometry", "dirichlet_solver", "shape_calculus",
           "inequality_audit", "spectral_sums", "optimizer", "cli")


def fmt(x) -> str:
    """Canonical scalar text."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def config_hash(config: dict) -> str:
    text = "\n".join(f"{k}={fmt(v) if not isinstance(v, (list, tuple)) else ','.join(fmt(e) for e in v)}"
                     for k, v in sorted(config.items()))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def meta(config: dict | None = None) -> dict:
    config = config or {}
    return {"version": __version__, "config_hash": config_hash(config),
            "modules": {m: __version__ for m in MODULES}}


def _to_json(obj, indent: int, level: int = 0) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_to_json(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_to_json(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _to_json(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, str):
        return json.dumps(obj)
    if obj is None:
        return "null"
    if isinstance(obj, (float, np.floating)) and not math.isfinite(float(obj)):
        return json.dumps(fmt(obj))
    return fmt(obj)


def dumps(payload, indent: int = 1) -> str:
    return _to_json(payload, indent) + "\n"


def write_json(path, payload: dict, config: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"meta": meta(config), **payload}
    path.write_text(dumps(doc))
    return path


def write_csv(path, header, rows, config: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    m = meta(config)
    with open(path, "w", newline="") as fh:
        fh.write(f"# nearball {m['version']}\n# config_hash {m['config_hash']}\n")
        fh.write("# modules " + " ".join(f"{k}={v}" for k, v in m["modules"].items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path):
    """Rows of a file written by ``write_csv`` (header comments skipped)."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.reader(lines))
