"""Direct SDP solves of the ISAC beamforming problem and its weighted inner problem.

Backend: CLARABEL through cvxpy with its documented 1e-8 gap/feasibility
tolerances pinned explicitly; SCS (eps 1e-8) is the fallback when CLARABEL
errors out.  Complex Hermitian variables are used directly; cvxpy handles the
real embedding internally while the file formats stay complex-valued.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

CLARABEL_OPTS = {"tol_gap_abs": 1e-8, "tol_gap_rel": 1e-8, "tol_feas": 1e-8}
SCS_OPTS = {"eps": 1e-8, "max_iters": 200_000}

OK_STATUSES = ("optimal", "optimal_inaccurate")
UNBOUNDED_STATUSES = ("unbounded", "unbounded_inaccurate", "infeasible_or_unbounded")


@dataclass(frozen=True)
class OracleResult:
    """Backend solve outcome: objective, covariances (possibly rank > 1), status."""

    objective: float | None
    covariances: np.ndarray | None
    status: str
    wall_seconds: float
    solver_seconds: float | None
    solver: str
    max_residual: float | None  # worst relative constraint residual, optimal runs only

    @property
    def ok(self) -> bool:
        return self.status in OK_STATUSES

    @property
    def unbounded(self) -> bool:
        return self.status in UNBOUNDED_STATUSES


def sensing_matrices(theta, d, m) -> np.ndarray:
    """Residual matrices of the optimally-scaled beampattern fit (contract formula)."""
    theta = np.asarray(theta, dtype=float)
    d = np.asarray(d, dtype=float)
    steer = np.exp(1j * np.pi * np.arange(m)[:, None] * np.sin(theta)[None, :])
    outer = np.einsum("mq,nq->qmn", steer, steer.conj())
    weighted = np.einsum("q,qmn->mn", d, outer)
    mats = d[:, None, None] * weighted[None] / float(np.sum(d**2)) - outer
    return 0.5 * (mats + mats.conj().swapaxes(-1, -2))


def _solve(prob):
    import warnings

    import cvxpy as cp

    t0 = time.perf_counter()
    with warnings.catch_warnings():
        # cvxpy's complex-to-real reduction builds Constant([[0.0]]) for 1x1
        # Hermitian variables and warns about its own nested list
        warnings.filterwarnings("ignore", message=".*nested list.*", category=UserWarning)
        try:
            prob.solve(solver=cp.CLARABEL, **CLARABEL_OPTS)
            solver = "CLARABEL"
        except cp.error.SolverError:
            prob.solve(solver=cp.SCS, **SCS_OPTS)
            solver = "SCS"
    wall = time.perf_counter() - t0
    stats = prob.solver_stats
    solver_seconds = None if stats is None else stats.solve_time
    return prob.status, wall, solver_seconds, solver


def _sinr_constraints(cp, vs, channels, gamma, sigma2):
    total = sum(vs)
    cons = [v >> 0 for v in vs]
    for k in range(len(vs)):
        hhh = np.outer(channels[k], channels[k].conj())
        cons.append(
            (1.0 + 1.0 / gamma[k]) * cp.real(cp.trace(hhh @ vs[k]))
            >= cp.real(cp.trace(hhh @ total)) + sigma2[k]
        )
    return cons, total


def _sinr_residual(covariances, channels, gamma, sigma2) -> float:
    per_user = np.real(
        np.einsum("km,jmn,kn->kj", channels.conj(), covariances, channels)
    )
    worst = 0.0
    for k in range(len(gamma)):
        signal = per_user[k, k]
        interference = per_user[k].sum() - signal
        achieved = signal / (interference + sigma2[k])
        worst = max(worst, (gamma[k] - achieved) / gamma[k])
    return worst


def solve_direct_sdp(inst: dict) -> OracleResult:
    """Solve the full problem: min total power, SINR constraints, Schur MSE block."""
    import cvxpy as cp

    m, k, q = inst["M"], inst["K"], inst["Q"]
    channels, gamma, sigma2 = inst["channels"], inst["gamma"], inst["sigma2"]
    q_eta = q * float(inst["eta"])
    mats = sensing_matrices(inst["theta"], inst["d"], m)

    vs = [cp.Variable((m, m), hermitian=True) for _ in range(k)]
    cons, total = _sinr_constraints(cp, vs, channels, gamma, sigma2)
    residuals = cp.hstack([cp.real(cp.trace(mats[i] @ total)) for i in range(q)])
    block = cp.bmat(
        [
            [np.eye(q), cp.reshape(residuals, (q, 1), order="F")],
            [cp.reshape(residuals, (1, q), order="F"), np.array([[q_eta]])],
        ]
    )
    cons.append(block >> 0)
    prob = cp.Problem(cp.Minimize(cp.real(sum(cp.trace(v) for v in vs))), cons)
    status, wall, solver_seconds, solver = _solve(prob)

    if status not in OK_STATUSES:
        return OracleResult(None, None, status, wall, solver_seconds, solver, None)
    covs = np.array([0.5 * (v.value + v.value.conj().T) for v in vs])
    r = covs.sum(axis=0)
    res_vec = np.real(np.einsum("qij,ji->q", mats, r))
    mse_resid = max(0.0, (float(res_vec @ res_vec) - q_eta) / q_eta)
    psd_resid = max(
        0.0, max(-np.linalg.eigvalsh(v)[0] / (1.0 + np.real(np.trace(v))) for v in covs)
    )
    max_residual = max(_sinr_residual(covs, channels, gamma, sigma2), mse_resid, psd_resid)
    return OracleResult(
        float(prob.value), covs, status, wall, solver_seconds, solver, max_residual
    )


def solve_gdb_sdp(inst: dict) -> OracleResult:
    """Solve the weighted inner problem: min tr(B * sum V_k) under SINR constraints."""
    import cvxpy as cp

    m, k = inst["M"], inst["K"]
    channels, gamma, sigma2 = inst["channels"], inst["gamma"], inst["sigma2"]
    b = np.asarray(inst["B"], dtype=complex)
    b = 0.5 * (b + b.conj().T)

    vs = [cp.Variable((m, m), hermitian=True) for _ in range(k)]
    cons, total = _sinr_constraints(cp, vs, channels, gamma, sigma2)
    prob = cp.Problem(cp.Minimize(cp.real(cp.trace(b @ total))), cons)
    status, wall, solver_seconds, solver = _solve(prob)

    if status not in OK_STATUSES:
        return OracleResult(None, None, status, wall, solver_seconds, solver, None)
    covs = np.array([0.5 * (v.value + v.value.conj().T) for v in vs])
    max_residual = _sinr_residual(covs, channels, gamma, sigma2)
    return OracleResult(
        float(prob.value), covs, status, wall, solver_seconds, solver, max_residual
    )
