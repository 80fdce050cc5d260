"""Instance / solution file formats and CSV emitters.

The instance file is JSON with fields
    M, K, Q, eta, gamma[], sigma2[], theta[], d[]
and `channels` as K arrays of M [re, im] pairs.  A weighted downlink instance
additionally carries `B` as M arrays of M [re, im] pairs (sensing fields are
optional there).  A solution file mirrors the instance fields plus `V` (K
matrices as [re, im] pairs), `p`, `lambda` (null when not applicable) and
`objective`.  These schemas are the contract shared with external validators,
so loaders here are deliberately strict about the required fields.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .downlink import DownlinkProblem
from .model import Scenario


def pack_complex(a: np.ndarray) -> list:
    """Nested lists of [re, im] pairs with the same leading shape as `a`."""
    return np.stack([np.real(a), np.imag(a)], axis=-1).tolist()


def unpack_complex(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex data must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "M": scenario.M,
        "K": scenario.K,
        "Q": scenario.Q,
        "eta": scenario.eta,
        "gamma": scenario.gamma.tolist(),
        "sigma2": scenario.sigma2.tolist(),
        "theta": scenario.theta.tolist(),
        "d": scenario.d.tolist(),
        "channels": pack_complex(scenario.channels),
    }


def scenario_from_dict(data: dict) -> Scenario:
    for key in ("M", "K", "Q", "eta", "gamma", "sigma2", "theta", "d", "channels"):
        if key not in data:
            raise ValueError(f"instance file is missing required field '{key}'")
    channels = unpack_complex(data["channels"])
    scenario = Scenario(
        channels=channels,
        gamma=data["gamma"],
        sigma2=data["sigma2"],
        theta=data["theta"],
        d=data["d"],
        eta=data["eta"],
    )
    if (scenario.M, scenario.K, scenario.Q) != (data["M"], data["K"], data["Q"]):
        raise ValueError("declared M/K/Q do not match the array shapes")
    return scenario


def save_instance(scenario: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(scenario_to_dict(scenario), indent=1))
    return path


def load_instance(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def downlink_to_dict(prob: DownlinkProblem) -> dict:
    return {
        "M": prob.M,
        "K": prob.K,
        "gamma": prob.gamma.tolist(),
        "sigma2": prob.sigma2.tolist(),
        "channels": pack_complex(prob.channels),
        "B": pack_complex(prob.weight),
    }


def downlink_from_dict(data: dict) -> DownlinkProblem:
    for key in ("M", "K", "gamma", "sigma2", "channels", "B"):
        if key not in data:
            raise ValueError(f"downlink instance file is missing required field '{key}'")
    return DownlinkProblem(
        weight=unpack_complex(data["B"]),
        channels=unpack_complex(data["channels"]),
        gamma=data["gamma"],
        sigma2=data["sigma2"],
    )


def save_downlink_instance(prob: DownlinkProblem, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(downlink_to_dict(prob), indent=1))
    return path


def load_downlink_instance(path) -> DownlinkProblem:
    return downlink_from_dict(json.loads(Path(path).read_text()))


def solution_to_dict(
    scenario: Scenario,
    covariances: np.ndarray,
    powers: np.ndarray,
    objective: float,
    lam: np.ndarray | None = None,
    **extra,
) -> dict:
    data = scenario_to_dict(scenario)
    data["V"] = pack_complex(np.asarray(covariances, dtype=complex))
    data["p"] = np.asarray(powers, dtype=float).tolist()
    data["lambda"] = None if lam is None else np.asarray(lam, dtype=float).tolist()
    data["objective"] = float(objective)
    data.update(extra)
    return data


def save_solution(path, **kwargs) -> Path:
    path = Path(path)
    path.write_text(json.dumps(solution_to_dict(**kwargs), indent=1))
    return path


def load_solution(path) -> dict:
    """Load a solution file; V/p/lambda/channels come back as numpy arrays."""
    data = json.loads(Path(path).read_text())
    for key in ("V", "p", "objective"):
        if key not in data:
            raise ValueError(f"solution file is missing required field '{key}'")
    data["V"] = unpack_complex(data["V"])
    data["p"] = np.asarray(data["p"], dtype=float)
    if data.get("lambda") is not None:
        data["lambda"] = np.asarray(data["lambda"], dtype=float)
    if "channels" in data:
        data["channels"] = unpack_complex(data["channels"])
    return data


def write_fpi_trace_csv(path, trace: np.ndarray) -> Path:
    """Write iterates as rows (iteration, beta_0.., residual), residual blank on row 0."""
    path = Path(path)
    trace = np.asarray(trace, dtype=float)
    k = trace.shape[1]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration"] + [f"beta_{i}" for i in range(k)] + ["residual"])
        for i, row in enumerate(trace):
            res = "" if i == 0 else repr(float(np.max(np.abs(row - trace[i - 1]))))
            writer.writerow([i] + [repr(float(x)) for x in row] + [res])
    return path


def write_ascent_log_csv(path, records) -> Path:
    """Per-outer-iteration log: (t, dual_value, grad_norm, backtracks, step, accepted)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "dual_value", "grad_norm", "backtracks", "step", "accepted"])
        for r in records:
            writer.writerow(
                [
                    r.t,
                    repr(float(r.dual_value)),
                    repr(float(r.grad_norm)),
                    "" if r.backtracks is None else r.backtracks,
                    "" if r.step is None else repr(float(r.step)),
                    int(r.accepted),
                ]
            )
    return path
