#!/usr/bin/env python3
"""Seeded search for a two-user downlink instance with two dual fixed points.

Looks for an indefinite-weight instance where (i) the plain iteration from
100*ones converges to a certified fixed point, (ii) the dense-grid enumeration
finds a second, componentwise-smaller fixed point, and (iii) the projected
variant started near the origin gets trapped at exactly zero.  The first hit
is written to tests/fixtures/two_fixed_points.json in the shared downlink
instance format.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from isacbf.downlink import DownlinkProblem, FpiStatus, fpi_solve, interference_map_raw
from isacbf.fileio import save_downlink_instance
from isacbf.harness import enumerate_fixed_points, projected_fpi


def candidate(rng):
    ew = np.array([1.0, -rng.uniform(0.3, 1.5)])
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    q, _ = np.linalg.qr(a)
    b = (q * ew) @ q.conj().T
    b = 0.5 * (b + b.conj().T)
    h = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
    gamma = rng.uniform(0.5, 3.0, 2)
    return DownlinkProblem(weight=b, channels=h, gamma=gamma, sigma2=np.ones(2))


def inspect(prob):
    out = fpi_solve(prob)
    if out.status is not FpiStatus.CONVERGED:
        return None
    beta_star = out.beta_star
    vals0, ok0 = interference_map_raw(np.zeros(2), prob)
    if not ok0 or not np.all(vals0 < 0):
        return None  # origin must trap the projected variant
    box = 2.0 * float(np.max(beta_star))
    roots = enumerate_fixed_points(prob, box_hi=box, grid_n=60)
    if len(roots) < 2:
        return None
    top = roots[np.argmax(roots.sum(axis=1))]
    if np.max(np.abs(top - beta_star)) > 1e-6 * (1 + np.max(np.abs(beta_star))):
        return None
    others = [r for r in roots if np.max(np.abs(r - top)) > 1e-6]
    if not any(np.all(r <= top + 1e-9) for r in others):
        return None
    origin_init = 0.05 * beta_star
    trace, status = projected_fpi(prob, origin_init)
    if status != "converged" or np.max(np.abs(trace[-1])) > 0:
        return None
    return beta_star, roots


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    rng = np.random.default_rng(seed)
    for trial in range(20_000):
        prob = candidate(rng)
        found = inspect(prob)
        if found is None:
            continue
        beta_star, roots = found
        out = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "two_fixed_points.json"
        out.parent.mkdir(parents=True, exist_ok=True)
        save_downlink_instance(prob, out)
        print(f"trial {trial}: wrote {out}")
        print(f"beta* = {beta_star}")
        print(f"fixed points found:\n{roots}")
        return 0
    print("no instance found", file=sys.stderr)
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
