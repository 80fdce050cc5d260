"""Independent reader/writer for the shared instance and solution JSON formats.

Deliberately implemented from the format contract rather than any solver
code: fields M, K, Q, eta, gamma[], sigma2[], theta[], d[], channels as K
arrays of M [re, im] pairs; weighted downlink instances add B as M arrays of
M [re, im] pairs; solutions add V (K matrices of [re, im] pairs), p, lambda
(null allowed) and objective.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

INSTANCE_FIELDS = ("M", "K", "Q", "eta", "gamma", "sigma2", "theta", "d", "channels")
GDB_FIELDS = ("M", "K", "gamma", "sigma2", "channels", "B")


def unpack_complex(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex data must be nested [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def pack_complex(a: np.ndarray) -> list:
    return np.stack([np.real(a), np.imag(a)], axis=-1).tolist()


def load_instance(path) -> dict:
    raw = json.loads(Path(path).read_text())
    missing = [f for f in INSTANCE_FIELDS if f not in raw]
    if missing:
        raise ValueError(f"instance file lacks fields: {missing}")
    inst = dict(raw)
    inst["channels"] = unpack_complex(raw["channels"])
    for key in ("gamma", "sigma2", "theta", "d"):
        inst[key] = np.asarray(raw[key], dtype=float)
    if inst["channels"].shape != (raw["K"], raw["M"]):
        raise ValueError("channel array shape disagrees with declared K, M")
    if len(inst["theta"]) != raw["Q"] or len(inst["d"]) != raw["Q"]:
        raise ValueError("grid arrays disagree with declared Q")
    return inst


def load_gdb_instance(path) -> dict:
    raw = json.loads(Path(path).read_text())
    missing = [f for f in GDB_FIELDS if f not in raw]
    if missing:
        raise ValueError(f"downlink instance file lacks fields: {missing}")
    inst = dict(raw)
    inst["channels"] = unpack_complex(raw["channels"])
    inst["B"] = unpack_complex(raw["B"])
    for key in ("gamma", "sigma2"):
        inst[key] = np.asarray(raw[key], dtype=float)
    if inst["B"].shape != (raw["M"], raw["M"]):
        raise ValueError("B must be M x M")
    return inst


def save_solution(path, instance_raw: dict, covariances, objective, lam=None, **extra) -> Path:
    """Write a solution file mirroring the instance fields.

    Powers default to the per-user covariance traces (no rank-one extraction
    is attempted here).
    """
    data = dict(instance_raw)
    data.pop("V", None)
    if covariances is None:
        data["V"] = None
        data["p"] = None
    else:
        covariances = np.asarray(covariances, dtype=complex)
        data["V"] = pack_complex(covariances)
        data["p"] = [float(np.real(np.trace(v))) for v in covariances]
    data["lambda"] = None if lam is None else np.asarray(lam, dtype=float).tolist()
    data["objective"] = None if objective is None else float(objective)
    data.update(extra)
    path = Path(path)
    path.write_text(json.dumps(data, indent=1))
    return path


def load_solution(path) -> dict:
    data = json.loads(Path(path).read_text())
    for key in ("V", "p", "objective"):
        if key not in data:
            raise ValueError(f"solution file lacks field '{key}'")
    if data["V"] is not None:
        data["V"] = unpack_complex(data["V"])
        data["p"] = np.asarray(data["p"], dtype=float)
    if data.get("lambda") is not None:
        data["lambda"] = np.asarray(data["lambda"], dtype=float)
    return data
