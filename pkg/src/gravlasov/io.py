"""Snapshot, sidecar and CSV serialization.

Snapshot layout (little-endian)::

    b"VPEN"  u32 version  u64 P
    8 x f64: c1, lambda, alpha, n_cut, beta, time, eps, truncated mass
    P x 7 x f64: x1 x2 x3 v1 v2 v3 w

Unknown header values are written as NaN.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .initial_data import Ensemble, InitialDataParams, TruncationParams

__all__ = [
    "MAGIC",
    "VERSION",
    "SnapshotError",
    "encode_snapshot",
    "decode_snapshot",
    "write_snapshot",
    "read_snapshot",
    "write_sidecar",
    "write_trajectory_csv",
    "write_json",
    "fmt",
]

MAGIC = b"VPEN"
VERSION = 1
_HEAD = struct.Struct("<4sIQ8d")
_RECORD = np.dtype("<f8")


class SnapshotError(ValueError):
    pass


def fmt(x) -> str:
    """Shortest round-trip decimal for a float."""
    return repr(float(x))


def _header_values(ens: Ensemble) -> list:
    raw = ens.meta.get("header")
    vals = list(raw) if raw is not None else [math.nan] * 8
    if ens.params is not None:
        vals[0:3] = [ens.params.c1, ens.params.lam, ens.params.alpha]
    if ens.trunc is not None:
        vals[3:5] = [ens.trunc.n_cut, ens.trunc.beta]
    vals[5] = ens.time
    if "eps" in ens.meta:
        vals[6] = ens.meta["eps"]
    if "truncated_mass" in ens.meta:
        vals[7] = ens.meta["truncated_mass"]
    return [float(v) for v in vals]


def encode_snapshot(ens: Ensemble) -> bytes:
    head = _HEAD.pack(MAGIC, VERSION, len(ens), *_header_values(ens))
    body = np.empty((len(ens), 7), dtype=_RECORD)
    body[:, 0:3] = ens.x
    body[:, 3:6] = ens.v
    body[:, 6] = ens.w
    return head + body.tobytes()


def decode_snapshot(data: bytes) -> Ensemble:
    if len(data) < _HEAD.size:
        raise SnapshotError("truncated snapshot header")
    magic, version, n, *vals = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    expected = _HEAD.size + n * 7 * 8
    if len(data) != expected:
        raise SnapshotError(f"snapshot holds {len(data)} bytes, header implies {expected}")
    body = np.frombuffer(data, dtype=_RECORD, offset=_HEAD.size).reshape(n, 7)
    c1, lam, alpha, n_cut, beta, time, eps, mass = vals
    params = None
    if not any(math.isnan(v) for v in (c1, lam, alpha)):
        params = InitialDataParams(c1, lam, alpha)
    trunc = None
    if not any(math.isnan(v) for v in (n_cut, beta)):
        trunc = TruncationParams(n_cut, beta)
    meta = {"header": tuple(vals)}
    if not math.isnan(eps):
        meta["eps"] = eps
    if not math.isnan(mass):
        meta["truncated_mass"] = mass
    return Ensemble(body[:, 0:3].copy(), body[:, 3:6].copy(), body[:, 6].copy(), params=params,
                    trunc=trunc, time=time, meta=meta)


def write_snapshot(path, ens: Ensemble) -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(ens))
    return path


def read_snapshot(path) -> Ensemble:
    return decode_snapshot(Path(path).read_bytes())


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_sidecar(path, ens: Ensemble, seed=None) -> Path:
    meta = {
        "format": MAGIC.decode(),
        "version": VERSION,
        "particles": len(ens),
        "params": None if ens.params is None else
        {"c1": ens.params.c1, "lambda": ens.params.lam, "alpha": ens.params.alpha},
        "truncation": None if ens.trunc is None else
        {"n_cut": ens.trunc.n_cut, "beta": ens.trunc.beta, "radius": ens.trunc.radius},
        "seed": ens.seed if seed is None else seed,
        "truncated_mass": ens.meta.get("truncated_mass"),
        "total_weight": ens.total_mass,
        "time": ens.time,
    }
    return write_json(path, meta)


TRAJECTORY_COLUMNS = ("t", "kinetic", "potential", "total", "max_speed", "max_accel")


def write_trajectory_csv(path, traj) -> Path:
    """One row per recorded time: ``t, T^N, U^N, E^N, max speed, max |G^N|``."""
    path = Path(path)
    steps = np.searchsorted(traj.step_times, traj.times)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(TRAJECTORY_COLUMNS)
        for j, k in enumerate(steps):
            out.writerow([fmt(traj.times[j]), fmt(traj.kinetic[j]), fmt(traj.potential[j]),
                          fmt(traj.kinetic[j] + traj.potential[j]), fmt(traj.max_speed[k]),
                          fmt(traj.max_accel[k])])
    return path
