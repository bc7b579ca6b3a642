"""CSV and JSON serialization with 17 significant digits and LF line endings."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dynamics import Trajectory


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_table(path, header, columns) -> None:
    """Write equal-length columns under ``header`` as UTF-8 CSV."""
    data = np.column_stack([np.asarray(c, dtype=float).reshape(len(columns[0]), -1) for c in columns])
    if data.shape[1] != len(header):
        raise ValueError(f"header has {len(header)} names for {data.shape[1]} columns")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in data:
            writer.writerow([_fmt(x) for x in row])


def read_table(path):
    """Return ``(header, data)`` from a CSV written by :func:`write_table`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(header))
    return header, data


def trajectory_header(dim_q: int, dim_u: int) -> list:
    return (["t"] + [f"q{i + 1}" for i in range(dim_q)] + [f"p{i + 1}" for i in range(dim_q)]
            + [f"u{a + 1}" for a in range(dim_u)] + [f"w{a + 1}" for a in range(dim_u)])


def trajectory_to_csv(traj: Trajectory, path) -> None:
    write_table(path, trajectory_header(traj.dim_q, traj.dim_u),
                [traj.times, traj.q, traj.p, traj.u, traj.w])


def trajectory_from_csv(path) -> Trajectory:
    header, data = read_table(path)
    N = sum(1 for h in header if h.startswith("q"))
    M = sum(1 for h in header if h.startswith("u"))
    cols = np.split(data[:, 1:], np.cumsum([N, N, M]), axis=1)
    return Trajectory(data[:, 0].copy(), *(c.copy() for c in cols))


def trajectory_to_dict(traj: Trajectory) -> dict:
    names = trajectory_header(traj.dim_q, traj.dim_u)
    cols = np.column_stack([traj.times, traj.q, traj.p, traj.u, traj.w])
    out = {name: [float(x) for x in cols[:, j]] for j, name in enumerate(names)}
    out["meta"] = to_jsonable(traj.meta)
    return out


def to_jsonable(obj):
    """Convert numpy containers and scalars into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True)
