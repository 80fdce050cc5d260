"""Outer subgradient ascent over the beampattern-MSE multipliers.

Maximizes the penalized dual value dtilde(lam) = d(lam) - 2*sqrt(Q*eta)*||lam||
with alternate Barzilai-Borwein stepsizes, backtracking any step that makes the
inner weighted downlink problem unbounded.  Each accepted iterate keeps the
inner problem solvable, and the final inner solution is returned as the ISAC
beamforming solution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .downlink import (
    DownlinkProblem,
    FpiStatus,
    RecoveryError,
    fpi_solve,
    recover_primal,
    weighting_matrix,
)
from .model import (
    BeamformingSolution,
    Scenario,
    SensingOperator,
    ViolationReport,
    build_sensing_operator,
    check_solution,
    sensing_map,
)


class InnerUnboundedError(RuntimeError):
    """The inner weighted problem is unbounded (or could not be certified) at this lambda."""


class InfeasibleScenarioError(RuntimeError):
    """The SINR constraints alone are infeasible; no multiplier can fix that."""


@dataclass(frozen=True)
class AscentParams:
    """Outer-loop parameters.

    step0 / backtrack / grad_tol follow the usual subgradient-ascent roles;
    BB steps are clamped to [step_min, step_max].  Two optional guards refine
    the stopping rule beyond ||g|| <= grad_tol: mse_guard_rtol caps the
    relative MSE violation of the reported solution and gap_guard_rtol caps
    the relative duality-gap estimate (total power minus penalized dual
    value), pinning the reported objective near the optimum.  Set either to
    None to disable it.
    """

    step0: float = 0.1
    backtrack: float = 0.5
    grad_tol: float = 1e-4
    max_outer: int = 500
    step_min: float = 1e-6
    step_max: float = 1e2
    max_backtracks: int = 60
    inner_tol: float = 1e-12
    inner_max_iter: int = 10_000
    inner_beta0: float = 100.0
    warm_start: bool = False
    mse_guard_rtol: float | None = 5e-6
    gap_guard_rtol: float | None = 1e-5

    def without_guards(self) -> "AscentParams":
        from dataclasses import replace

        return replace(self, mse_guard_rtol=None, gap_guard_rtol=None)

    def __post_init__(self):
        if not self.step0 > 0:
            raise ValueError("step0 must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")


@dataclass
class DualState:
    """Mutable state of one outer solve: current multipliers plus BB history."""

    lam: np.ndarray
    prev_lam: np.ndarray | None = None
    prev_grad: np.ndarray | None = None
    t: int = 0
    inner: "InnerResult | None" = None


@dataclass(frozen=True)
class InnerResult:
    """Inner solution at one lambda: optimal value, covariances, bookkeeping."""

    value: float  # tr(B(lam) * sum V_k)
    covariances: np.ndarray  # (K, M, M)
    powers: np.ndarray  # (K,)
    dual_objective: float  # sum beta*_k sigma2_k
    solve_seconds: float


@dataclass(frozen=True)
class AscentRecord:
    """One outer-iteration log row: (t, dtilde, ||g||, backtracks, step)."""

    t: int
    dual_value: float
    grad_norm: float
    backtracks: int | None
    step: float | None
    accepted: bool


@dataclass(frozen=True)
class IsacSolution:
    """Final ISAC beamforming solution with its dual certificate and log."""

    covariances: np.ndarray
    powers: np.ndarray
    lam: np.ndarray
    total_power: float
    dual_value: float  # dtilde at the final multipliers
    report: ViolationReport
    grad_norm: float
    iterations: int
    status: str  # converged | max_outer | stalled
    records: tuple[AscentRecord, ...] = field(repr=False, default=())
    inner_seconds: float = 0.0

    @property
    def solution(self) -> BeamformingSolution:
        return BeamformingSolution.from_covariances(self.covariances, self.powers)


def penalized_dual_value(lam: np.ndarray, inner_value: float, q_eta: float) -> float:
    """dtilde(lam) = d(lam) - 2*sqrt(Q*eta)*||lam||."""
    return float(inner_value - 2.0 * np.sqrt(q_eta) * np.linalg.norm(lam))


def subgradient(
    lam: np.ndarray, covariances: np.ndarray, op: SensingOperator, q_eta: float
) -> np.ndarray:
    """Supergradient of dtilde at lam for an optimal inner solution.

    g = -2 * sensing_map(sum V_k) - 2*sqrt(Q*eta) * lam/||lam||; at lam = 0 the
    norm term contributes nothing (any element of the subdifferential ball is
    valid) and optimality is instead decided by the ball condition
    ||2 * sensing_map(sum V_k)|| <= 2*sqrt(Q*eta).
    """
    lam = np.asarray(lam, dtype=float)
    total = np.sum(covariances, axis=0)
    g = -2.0 * sensing_map(0.5 * (total + total.conj().T), op)
    norm = np.linalg.norm(lam)
    if norm > 0:
        g = g - 2.0 * np.sqrt(q_eta) * lam / norm
    return g


def bb_stepsize(
    dlam: np.ndarray | None, dgrad: np.ndarray | None, t: int, params: AscentParams
) -> float:
    """Alternate Barzilai-Borwein stepsize, sign-adapted for maximization.

    Odd t uses <dlam, dlam>/|<dlam, dgrad>|, even t uses |<dlam, dgrad>|/<dgrad,
    dgrad>, clamped to [step_min, step_max]; vanishing denominators fall back to
    step0.
    """
    if t == 0 or dlam is None or dgrad is None:
        return params.step0
    sy = float(np.dot(dlam, dgrad))
    if t % 2 == 1:
        denom = abs(sy)
        step = float(np.dot(dlam, dlam)) / denom if denom > 0 else params.step0
    else:
        denom = float(np.dot(dgrad, dgrad))
        step = abs(sy) / denom if denom > 0 else params.step0
    return float(np.clip(step, params.step_min, params.step_max))


class FpiInnerSolver:
    """Default inner engine: dual fixed-point iteration plus rank-one recovery."""

    def __init__(self, scenario: Scenario, params: AscentParams):
        self._scenario = scenario
        self._params = params
        self._last_beta = None
        self.last_attempt_seconds = 0.0

    def solve(self, lam: np.ndarray, weight: np.ndarray) -> InnerResult:
        p = self._params
        prob = DownlinkProblem(
            weight=weight,
            channels=self._scenario.channels,
            gamma=self._scenario.gamma,
            sigma2=self._scenario.sigma2,
        )
        beta0 = np.full(prob.K, p.inner_beta0)
        if p.warm_start and self._last_beta is not None:
            beta0 = self._last_beta
        t0 = time.perf_counter()
        try:
            outcome = fpi_solve(prob, beta0=beta0, tol=p.inner_tol, max_iter=p.inner_max_iter)
            if outcome.status is not FpiStatus.CONVERGED:
                raise InnerUnboundedError(f"inner solve ended with status {outcome.status.value}")
            try:
                sol = recover_primal(outcome.beta_star, prob)
            except RecoveryError as exc:
                # conservative: treat an unrecoverable fixed point like an unbounded step
                raise InnerUnboundedError(str(exc)) from exc
        finally:
            self.last_attempt_seconds = time.perf_counter() - t0
        if p.warm_start:
            self._last_beta = outcome.beta_star
        return InnerResult(
            value=sol.weighted_objective,
            covariances=sol.covariances,
            powers=sol.powers,
            dual_objective=sol.dual_objective,
            solve_seconds=self.last_attempt_seconds,
        )


def inner_value_and_solution(
    lam: np.ndarray,
    scenario: Scenario,
    op: SensingOperator | None = None,
    params: AscentParams | None = None,
) -> tuple[float, np.ndarray]:
    """Optimal inner value d(lam) and covariances at the given multipliers.

    Raises InnerUnboundedError when the weighted problem is unbounded, which
    tells the outer loop to backtrack.
    """
    params = params or AscentParams()
    if op is None:
        op = build_sensing_operator(scenario.theta, scenario.d, scenario.M)
    res = FpiInnerSolver(scenario, params).solve(np.asarray(lam, dtype=float), weighting_matrix(lam, op))
    return res.value, res.covariances


def dual_ascent_solve(
    scenario: Scenario,
    params: AscentParams | None = None,
    inner_solver=None,
) -> IsacSolution:
    """Solve the ISAC beamforming problem by subgradient ascent on the multipliers.

    Starts from lam = 0 (classical SINR-only problem); every accepted iterate
    keeps the inner problem bounded, enforced by halving the step up to
    max_backtracks times.  Stops when the (min-norm) supergradient norm falls
    below grad_tol and, if mse_guard_rtol is set, the current solution's
    relative MSE violation is within that guard.

    Raises InfeasibleScenarioError when the classical problem at lam = 0 is
    already infeasible.
    """
    params = params or AscentParams()
    op = build_sensing_operator(scenario.theta, scenario.d, scenario.M)
    q_eta = scenario.Q * scenario.eta
    radius = 2.0 * np.sqrt(q_eta)
    solver = inner_solver if inner_solver is not None else FpiInnerSolver(scenario, params)

    state = DualState(lam=np.zeros(scenario.Q))
    try:
        state.inner = solver.solve(state.lam, weighting_matrix(state.lam, op))
    except InnerUnboundedError as exc:
        raise InfeasibleScenarioError(
            "classical SINR-only problem is infeasible at lam = 0"
        ) from exc

    inner_seconds = state.inner.solve_seconds
    records: list[AscentRecord] = []
    status = "max_outer"
    grad_norm = np.inf
    rejected_in_a_row = 0

    for _ in range(params.max_outer):
        inner = state.inner
        total = np.sum(inner.covariances, axis=0)
        m = sensing_map(0.5 * (total + total.conj().T), op)
        lam_norm = float(np.linalg.norm(state.lam))
        g = -2.0 * m if lam_norm == 0.0 else -2.0 * m - radius * state.lam / lam_norm
        # distance from 0 to the superdifferential; at lam = 0 this is the
        # ball condition, elsewhere the supergradient is unique
        grad_norm = (
            max(0.0, 2.0 * float(np.linalg.norm(m)) - radius) if lam_norm == 0.0 else float(np.linalg.norm(g))
        )
        dtil = penalized_dual_value(state.lam, inner.value, q_eta)
        mse_lhs = float(np.dot(m, m))
        mse_viol = max(0.0, (mse_lhs - q_eta) / q_eta)
        total_now = float(np.sum(np.real(np.trace(inner.covariances, axis1=1, axis2=2))))
        gap_est = total_now - dtil
        if (
            grad_norm <= params.grad_tol
            and (params.mse_guard_rtol is None or mse_viol <= params.mse_guard_rtol)
            and (
                params.gap_guard_rtol is None
                or gap_est <= params.gap_guard_rtol * abs(total_now)
            )
        ):
            records.append(AscentRecord(state.t, dtil, grad_norm, None, None, True))
            status = "converged"
            break

        step = bb_stepsize(
            None if state.prev_lam is None else state.lam - state.prev_lam,
            None if state.prev_grad is None else g - state.prev_grad,
            state.t if state.prev_lam is not None else 0,
            params,
        )
        accepted = None
        backtracks = 0
        for ell in range(params.max_backtracks + 1):
            candidate = state.lam + step * params.backtrack**ell * g
            try:
                accepted = solver.solve(candidate, weighting_matrix(candidate, op))
            except InnerUnboundedError:
                inner_seconds += getattr(solver, "last_attempt_seconds", 0.0)
                continue
            inner_seconds += accepted.solve_seconds
            backtracks = ell
            break
        if accepted is None:
            # full rejection: reset the stepsize by dropping BB history; a
            # second consecutive failure means no progress is possible
            records.append(
                AscentRecord(state.t, dtil, grad_norm, params.max_backtracks, step, False)
            )
            rejected_in_a_row += 1
            if rejected_in_a_row >= 2 or state.prev_lam is None:
                status = "stalled"
                break
            state.prev_lam = None
            state.prev_grad = None
            continue
        records.append(AscentRecord(state.t, dtil, grad_norm, backtracks, step, True))
        rejected_in_a_row = 0
        state.prev_lam = state.lam
        state.prev_grad = g
        state.lam = candidate
        state.inner = accepted
        state.t += 1

    inner = state.inner
    covs = inner.covariances
    report = check_solution(
        scenario, BeamformingSolution.from_covariances(covs, inner.powers), op=op
    )
    return IsacSolution(
        covariances=covs,
        powers=inner.powers,
        lam=state.lam.copy(),
        total_power=float(np.sum(np.real(np.trace(covs, axis1=1, axis2=2)))),
        dual_value=penalized_dual_value(state.lam, inner.value, q_eta),
        report=report,
        grad_norm=float(grad_norm),
        iterations=state.t,
        status=status,
        records=tuple(records),
        inner_seconds=inner_seconds,
    )
