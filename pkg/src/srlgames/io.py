"""CSV and JSON export.  Floats are written with 17 significant digits so files
round-trip exactly and compare byte-for-byte across runs."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    return format(float(x), ".17g")


def coordinate_names(prefix: str, actions) -> list[str]:
    """Player-major column names, e.g. ``Y1_2`` for player 1, action 2 (1-based)."""
    return [f"{prefix}{k + 1}_{a + 1}" for k, n in enumerate(actions) for a in range(n)]


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_trajectory_csv(path, trajectory, actions) -> Path:
    header = ["t"] + coordinate_names("Y", actions) + coordinate_names("X", actions)
    data = np.column_stack([trajectory.times, trajectory.Y, trajectory.X])
    return write_csv(path, header, data)


def read_trajectory_csv(path):
    with Path(path).open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")
    return path


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
