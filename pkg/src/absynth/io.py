"""Artifact writers: CSV tables, raw strategy dumps, PGM heatmaps, manifests."""
from __future__ import annotations

import csv
import json
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from .geometry import Partition


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def write_rows(path, rows: list, header=None):
    header = header or (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_bounds(path, part: Partition, lower, upper):
    centers = part.centers
    header = ["cell"] + [f"x{d}" for d in range(part.dim)] + ["safe", "lower", "upper"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        safe = part.safe_mask
        for i in range(part.n_cells):
            w.writerow([i, *(repr(float(c)) for c in centers[i]), int(safe[i]), repr(float(lower[i])),
                        repr(float(upper[i]))])


def write_strategy(path, actions: np.ndarray):
    """Raw little-endian int16 in C order, with the shape in a JSON sidecar."""
    path = Path(path)
    np.ascontiguousarray(actions, dtype="<i2").tofile(path)
    write_json(path.with_suffix(".json"), {"dtype": "int16-le", "order": "C", "shape": list(actions.shape),
                                           "axes": ["t", "cell", "z"]})


def read_strategy(path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    return np.fromfile(path, dtype="<i2").reshape(meta["shape"])


def write_pgm(path, part: Partition, values, maxval: int = 255):
    """Plain (P2) grayscale image of a per-cell field on a 2-D grid; row 0 is the top (largest y)."""
    if part.dim != 2:
        raise ValueError("heatmaps need a 2-D partition")
    nx, ny = part.counts
    grid = np.clip(np.asarray(values, float).reshape(nx, ny), 0.0, 1.0)
    img = np.rint(grid.T[::-1] * maxval).astype(int)
    lines = ["P2", f"{nx} {ny}", str(maxval)] + [" ".join(str(v) for v in row) for row in img]
    Path(path).write_text("\n".join(lines) + "\n")
    write_json(Path(path).with_suffix(".json"), {"value_at_0": 0.0, "value_at_maxval": 1.0, "maxval": maxval,
                                                 "x_range": [part.domain.lo[0], part.domain.hi[0]],
                                                 "y_range": [part.domain.lo[1], part.domain.hi[1]]})


def versions() -> dict:
    out = {"python": sys.version.split()[0], "platform": platform.platform()}
    for pkg in ("artifact", "numpy", "scipy", "pydantic"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out
