"""Downlink beamforming with a weighted (possibly indefinite) power objective.

Solves  min_{V_k >= 0} tr(B * sum_k V_k)  subject to per-user SINR constraints
by fixed-point iteration on the dual variables beta, certifies boundedness of
the problem, and recovers the rank-one primal solution from the converged dual
point.  With B = I this reduces to classical SINR-constrained power
minimization.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from .model import SensingOperator, hermitian_part, real_trace_inner

DEFAULT_BETA0 = 100.0
DEFAULT_FPI_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000
DEFAULT_CAP = 1e12
# PSD / range decisions use this tolerance scaled by (1 + ||C||).
CERT_TOL = 1e-9

HERMITIAN_TOL = 1e-10


class NotEvaluableError(RuntimeError):
    """The interference map is not defined at the requested point.

    Raised when some channel leaves the range of C(beta) or a quadratic form
    h^H C(beta)^+ h is nonpositive; callers treat this as evidence that the
    weighted problem is unbounded.
    """


class RecoveryError(RuntimeError):
    """Primal recovery failed (degenerate C(beta*) or bad power allocation)."""


@dataclass(frozen=True)
class DownlinkProblem:
    """One inner problem: Hermitian weight matrix plus the user data.

    weight   : (M, M) Hermitian, possibly indefinite
    channels : (K, M) complex
    gamma    : (K,) SINR targets, linear, > 0
    sigma2   : (K,) noise powers, > 0
    """

    weight: np.ndarray
    channels: np.ndarray
    gamma: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weight", np.array(self.weight, dtype=complex))
        object.__setattr__(self, "channels", np.array(self.channels, dtype=complex))
        object.__setattr__(self, "gamma", np.array(self.gamma, dtype=float))
        object.__setattr__(self, "sigma2", np.array(self.sigma2, dtype=float))
        m = self.weight.shape[0]
        if self.weight.shape != (m, m):
            raise ValueError("weight matrix must be square")
        asym = np.max(np.abs(self.weight - self.weight.conj().T))
        if asym > HERMITIAN_TOL * (1.0 + np.max(np.abs(self.weight))):
            raise ValueError(f"weight matrix is not Hermitian (residue {asym:.3e})")
        if self.channels.ndim != 2 or self.channels.shape[1] != m:
            raise ValueError("channels must be (K, M) with M matching the weight matrix")
        k = self.channels.shape[0]
        if k < 1:
            raise ValueError("at least one user is required")
        if self.gamma.shape != (k,) or self.sigma2.shape != (k,):
            raise ValueError("gamma and sigma2 must have one entry per user")
        if not (np.all(self.gamma > 0) and np.all(self.sigma2 > 0)):
            raise ValueError("gamma and sigma2 must be strictly positive")
        for name in ("weight", "channels", "gamma", "sigma2"):
            getattr(self, name).flags.writeable = False

    @property
    def K(self) -> int:
        return self.channels.shape[0]

    @property
    def M(self) -> int:
        return self.weight.shape[0]

    @cached_property
    def column_channels(self) -> np.ndarray:
        """Channels as an (M, K) column matrix, used by the linear solves."""
        h = np.ascontiguousarray(self.channels.T)
        h.flags.writeable = False
        return h


class FpiStatus(enum.Enum):
    CONVERGED = "converged"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class FpiOutcome:
    """Result of the dual fixed-point iteration.

    status    : CONVERGED only if the iteration converged *and* the fixed point
                passes the boundedness certificate; a converged iterate failing
                the certificate is reported UNBOUNDED
    beta_star : the certified fixed point (None unless CONVERGED); satisfies
                ||beta_star - I(beta_star)||_inf <= tol by construction
    trace     : (n+1, K) array of iterates, beta0 first
    residual  : ||beta(i+1) - beta(i)||_inf at exit
    """

    status: FpiStatus
    beta_star: np.ndarray | None
    trace: np.ndarray
    residual: float

    @property
    def bounded(self) -> bool:
        return self.status is FpiStatus.CONVERGED


def weighting_matrix(lam: np.ndarray, op: SensingOperator) -> np.ndarray:
    """Weight matrix of the inner problem for outer multipliers lam: I - 2 sum_q lam_q M_q."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (op.Q,):
        raise ValueError(f"lambda length {lam.shape} does not match grid size {op.Q}")
    return hermitian_part(np.eye(op.M) - 2.0 * np.einsum("q,qmn->mn", lam, op.matrices))


def dual_matrix(beta: np.ndarray, prob: DownlinkProblem) -> np.ndarray:
    """C(beta) = B + sum_k beta_k h_k h_k^H."""
    h = prob.column_channels
    return prob.weight + (h * np.asarray(beta, dtype=float)) @ h.conj().T


def _quadforms(c: np.ndarray, h: np.ndarray, tol: float) -> tuple[np.ndarray, bool]:
    """Quadratic forms h_k^H C^+ h_k for all columns of h, solving rather than inverting.

    Uses a Cholesky solve when C is positive definite and an eigen-based
    minimum-norm solve otherwise.  Returns (quadforms, range_ok); range_ok is
    False when some column has a component outside the range of C.
    """
    try:
        factor = cho_factor(c, check_finite=False)
        x = cho_solve(factor, h, check_finite=False)
        return np.real(np.einsum("mk,mk->k", h.conj(), x)), True
    except LinAlgError:
        pass
    w, u = eigh(c, check_finite=False)
    cut = tol * (1.0 + np.max(np.abs(w), initial=0.0))
    y = u.conj().T @ h
    kept = np.abs(w) > cut
    dropped_norm = np.sqrt(np.sum(np.abs(y[~kept]) ** 2, axis=0))
    col_norm = np.sqrt(np.sum(np.abs(h) ** 2, axis=0))
    range_ok = bool(np.all(dropped_norm <= tol * col_norm))
    quad = np.real(np.einsum("mk,mk->k", y[kept].conj(), y[kept] / w[kept, None]))
    return quad, range_ok


def interference_map_raw(
    beta: np.ndarray, prob: DownlinkProblem, tol: float = CERT_TOL
) -> tuple[np.ndarray, bool]:
    """Signed interference-map values, without the positivity requirement.

    Returns (values, evaluable) where values_k = (gamma_k/(gamma_k+1)) / quad_k
    keeps the sign of the quadratic form.  evaluable is False when a channel
    leaves the range of C(beta) or some quadratic form is exactly zero; the
    corresponding entries are NaN.
    """
    beta = np.asarray(beta, dtype=float)
    quad, range_ok = _quadforms(dual_matrix(beta, prob), prob.column_channels, tol)
    coef = prob.gamma / (prob.gamma + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(quad != 0.0, coef / quad, np.nan)
    if not range_ok:
        return np.full(prob.K, np.nan), False
    return vals, bool(np.all(quad != 0.0))


def interference_map(beta: np.ndarray, prob: DownlinkProblem, tol: float = CERT_TOL) -> np.ndarray:
    """Interference map I(beta) with I_k = (gamma_k/(gamma_k+1)) / (h_k^H C(beta)^+ h_k).

    Raises NotEvaluableError outside the evaluable region (range failure or a
    nonpositive quadratic form).
    """
    vals, evaluable = interference_map_raw(beta, prob, tol)
    if not evaluable or np.any(vals <= 0.0):
        raise NotEvaluableError("interference map not evaluable at this point")
    return vals


def certificate_holds(beta: np.ndarray, prob: DownlinkProblem, tol: float = CERT_TOL) -> bool:
    """Boundedness certificate: beta >= 0, C(beta) PSD, channels in range of C(beta).

    All comparisons use `tol` scaled by (1 + ||C||).
    """
    beta = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(beta)) or np.any(beta < -tol):
        return False
    c = dual_matrix(beta, prob)
    w, u = eigh(c, check_finite=False)
    scale = 1.0 + np.max(np.abs(w), initial=0.0)
    if w[0] < -tol * scale:
        return False
    h = prob.column_channels
    y = u.conj().T @ h
    dropped = np.abs(w) <= tol * scale
    resid = np.sqrt(np.sum(np.abs(y[dropped]) ** 2, axis=0))
    return bool(np.all(resid <= tol * np.sqrt(np.sum(np.abs(h) ** 2, axis=0))))


def fpi_solve(
    prob: DownlinkProblem,
    beta0: np.ndarray | None = None,
    tol: float = DEFAULT_FPI_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    cap: float = DEFAULT_CAP,
) -> FpiOutcome:
    """Run the fixed-point iteration beta <- I(beta) from beta0 (default 100 * ones).

    Unboundedness is declared when the map stops being evaluable, an iterate
    component exceeds `cap`, or a converged fixed point fails the certificate.
    Convergence requires two consecutive sub-tolerance steps and returns the
    point between them, so the reported residual is exactly
    ||beta_star - I(beta_star)||_inf <= tol while beta_star sits one map
    application past the first crossing (tighter for contractive instances).
    """
    h = prob.column_channels
    hc = h.conj()
    coef = prob.gamma / (prob.gamma + 1.0)
    beta = (
        np.full(prob.K, DEFAULT_BETA0) if beta0 is None else np.array(beta0, dtype=float)
    )
    if beta.shape != (prob.K,):
        raise ValueError("beta0 must have one entry per user")
    trace = [beta.copy()]
    residual = np.inf
    status = FpiStatus.ITERATION_LIMIT
    converged = False
    small_step = False
    for _ in range(max_iter):
        c = prob.weight + (h * beta) @ hc.T
        quad, range_ok = _quadforms(c, h, CERT_TOL)
        if not range_ok or np.any(quad <= 0.0):
            status = FpiStatus.UNBOUNDED
            break
        new = coef / quad
        trace.append(new)
        residual = float(np.max(np.abs(new - beta)))
        if np.any(new > cap):
            status = FpiStatus.UNBOUNDED
            beta = new
            break
        if residual <= tol:
            if small_step:
                converged = True
                break
            small_step = True
        else:
            small_step = False
        beta = new
    if converged:
        if certificate_holds(beta, prob):
            status = FpiStatus.CONVERGED
        else:
            status = FpiStatus.UNBOUNDED
    beta_star = beta.copy() if status is FpiStatus.CONVERGED else None
    return FpiOutcome(
        status=status, beta_star=beta_star, trace=np.array(trace), residual=residual
    )


def assess_boundedness(prob: DownlinkProblem, beta0=None, **kwargs) -> FpiOutcome:
    """Boundedness test used by the outer loop's backtracking step.

    The problem is declared bounded exactly when the iteration converges to a
    certified fixed point; an iteration-limit exit is indeterminate and is
    treated as unbounded by callers that need a conservative answer.
    """
    return fpi_solve(prob, beta0=beta0, **kwargs)


def solve_power_allocation(g: np.ndarray, gamma: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    """Powers making every SINR constraint tight for fixed unit directions.

    g[k, j] = |h_k^H v_j|^2.  Solves (1/gamma_k) p_k g_kk = sum_{j!=k} p_j g_kj
    + sigma2_k directly, falling back to fixed-point iteration when the direct
    solve is unreliable.  Raises RecoveryError unless the solution is strictly
    positive with a small residual.
    """
    g = np.asarray(g, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    k = g.shape[0]
    diag = np.diag(g)
    if np.any(diag <= 0):
        raise RecoveryError("zero direct gain; cannot allocate power")
    off = g - np.diag(diag)
    a = np.diag(diag / gamma) - off
    p = None
    try:
        p = np.linalg.solve(a, sigma2)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.max(np.abs(sigma2)) + np.max(np.abs(g)) * (np.max(np.abs(p)) if p is not None else 1.0))
    if p is None or np.any(p <= 0) or np.max(np.abs(a @ p - sigma2)) > 1e-10 * scale:
        # fixed-point fallback: p_k <- gamma_k (sum_{j!=k} p_j g_kj + sigma2_k) / g_kk
        p = np.zeros(k)
        for _ in range(100_000):
            new = gamma * (off @ p + sigma2) / diag
            if np.max(np.abs(new - p)) <= 1e-12 * (1.0 + np.max(np.abs(new))):
                p = new
                break
            if np.any(new > 1e15):
                raise RecoveryError("power allocation diverged")
            p = new
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise RecoveryError("power allocation has no positive solution")
    if np.max(np.abs(a @ p - sigma2)) > 1e-10 * scale:
        raise RecoveryError("power allocation residual too large")
    return p


@dataclass(frozen=True)
class DownlinkSolution:
    """Rank-one primal solution recovered from the converged dual point.

    covariances        : (K, M, M), V_k = p_k v_k v_k^H with unit-norm v_k
    powers             : (K,) strictly positive
    weighted_objective : tr(B * sum_k V_k), equals the dual objective at optimum
    total_power        : sum_k tr(V_k), the unweighted power for reporting
    dual_objective     : sum_k beta*_k sigma2_k
    """

    covariances: np.ndarray
    powers: np.ndarray
    weighted_objective: float
    total_power: float
    dual_objective: float


def recover_primal(
    beta_star: np.ndarray, prob: DownlinkProblem, tol: float = CERT_TOL
) -> DownlinkSolution:
    """Recover the rank-one primal solution at the converged dual point.

    Directions are v_k = C^{-1} h_k (normalized); powers solve the tight-SINR
    linear system.  Requires C(beta*) to be positive definite; a numerically
    singular C raises RecoveryError rather than regularizing.
    """
    beta_star = np.asarray(beta_star, dtype=float)
    c = dual_matrix(beta_star, prob)
    w = eigh(c, eigvals_only=True, check_finite=False)
    scale = 1.0 + np.max(np.abs(w), initial=0.0)
    if w[0] <= tol * scale:
        raise RecoveryError(
            f"C(beta*) is numerically singular (min eigenvalue {w[0]:.3e}); cannot recover directions"
        )
    h = prob.column_channels
    x = cho_solve(cho_factor(c, check_finite=False), h, check_finite=False)
    directions = x / np.linalg.norm(x, axis=0, keepdims=True)  # (M, K)
    gains = np.abs(h.conj().T @ directions) ** 2  # g[k, j] = |h_k^H v_j|^2
    p = solve_power_allocation(gains, prob.gamma, prob.sigma2)
    covs = np.einsum("k,mk,nk->kmn", p, directions, directions.conj())
    covs = hermitian_part(covs)
    total = hermitian_part(np.sum(covs, axis=0))
    return DownlinkSolution(
        covariances=covs,
        powers=p,
        weighted_objective=real_trace_inner(prob.weight, total),
        total_power=float(np.sum(p)),
        dual_objective=float(np.dot(beta_star, prob.sigma2)),
    )
