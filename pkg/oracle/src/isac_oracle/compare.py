"""Field-by-field comparison of two solution files."""

from __future__ import annotations

import numpy as np

from .iofmt import load_solution

# objective is the default: covariance splits and per-user powers need not be
# unique at the optimum, so they are compared only on request
DEFAULT_FIELDS = ("objective",)
KNOWN_FIELDS = ("objective", "p", "V", "lambda")


def _relative_diff(a, b) -> float:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return float("inf")
    scale = max(float(np.linalg.norm(a.ravel())), float(np.linalg.norm(b.ravel())), 1e-300)
    return float(np.linalg.norm((a - b).ravel())) / scale


def compare_solutions(path_a, path_b, tol: float, fields=DEFAULT_FIELDS):
    """Relative diffs of the requested fields; a field missing on either side is skipped.

    Returns (diffs, ok) where diffs maps field -> relative difference and ok is
    True when every compared diff is within tol.
    """
    a = load_solution(path_a)
    b = load_solution(path_b)
    diffs = {}
    for field in fields:
        if field not in KNOWN_FIELDS:
            raise ValueError(f"unknown comparison field '{field}'")
        va, vb = a.get(field), b.get(field)
        if va is None or vb is None:
            continue
        diffs[field] = _relative_diff(va, vb)
    ok = all(d <= tol for d in diffs.values())
    return diffs, ok
