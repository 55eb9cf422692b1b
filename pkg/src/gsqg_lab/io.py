"""Snapshot, CSV and JSON writers.

Snapshot layout (little-endian): b"GSQG", u16 version, u32 N, f64 L, f64 time,
then N*N f64 physical samples in row-major order (first index is x1).
"""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .spectral import SpectralField, make_grid

__all__ = [
    "SnapshotError",
    "write_snapshot",
    "read_snapshot",
    "snapshot_bytes",
    "snapshot_from_bytes",
    "write_trajectory_csv",
    "write_table_csv",
    "write_json",
    "to_jsonable",
]

MAGIC = b"GSQG"
VERSION = 1
_HEADER = struct.Struct("<4sHIdd")

PathLike = Union[str, Path]


class SnapshotError(ValueError):
    pass


def snapshot_bytes(f: SpectralField) -> bytes:
    grid = f.grid
    t = float("nan") if f.time is None else float(f.time)
    head = _HEADER.pack(MAGIC, VERSION, grid.n_points, grid.side_length, t)
    return head + np.ascontiguousarray(f.to_physical(), dtype="<f8").tobytes()


def snapshot_from_bytes(data: bytes) -> SpectralField:
    if len(data) < _HEADER.size:
        raise SnapshotError("truncated snapshot header")
    magic, version, n, L, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    body = data[_HEADER.size:]
    if len(body) != 8 * n * n:
        raise SnapshotError(f"expected {8 * n * n} payload bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f8").reshape(n, n)
    return SpectralField.from_physical(make_grid(n, L), values, time=None if math.isnan(t) else t)


def write_snapshot(path: PathLike, f: SpectralField) -> None:
    Path(path).write_bytes(snapshot_bytes(f))


def read_snapshot(path: PathLike) -> SpectralField:
    return snapshot_from_bytes(Path(path).read_bytes())


def _fmt(x) -> str:
    # repr of a Python float round-trips exactly
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_table_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_trajectory_csv(path: PathLike, traj) -> None:
    """Columns: t, l2, h_<sigma>..., gronwall_ratio, flux_residual."""
    sigmas = list(traj.hnorms)
    header = ["t", "l2"] + [f"h_{s:g}" for s in sigmas] + ["gronwall_ratio", "flux_residual"]
    g = traj.gronwall_ratio
    rows = ([traj.times[i], traj.l2[i]] + [traj.hnorms[s][i] for s in sigmas] + [g[i], traj.flux_residual[i]]
            for i in range(len(traj.times)))
    write_table_csv(path, header, rows)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if hasattr(obj, "to_json"):
        return to_jsonable(obj.to_json())
    return obj


def write_json(path: PathLike, obj) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
