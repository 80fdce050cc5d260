"""Problem data and sensing-metric machinery for ISAC transmit beamforming.

Conventions used throughout the package:
  * channels are stored as a (K, M) complex array, one row per user;
  * covariances are (M, M) Hermitian (stacks are (K, M, M));
  * gamma (SINR targets) and sigma2 (noise powers) are linear-scale, > 0;
  * the array is a half-wavelength uniform linear array, so the steering
    vector at angle theta has entries exp(j*pi*m*sin(theta)), m = 0..M-1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Imaginary residue above this (relative) level in a Hermitian inner product
# indicates corrupted inputs rather than round-off.
IMAG_RESIDUE_TOL = 1e-10


class NumericsError(RuntimeError):
    """Internal numerical-integrity failure (non-Hermitian data where Hermitian is required)."""


def hermitian_part(a: np.ndarray) -> np.ndarray:
    """(A + A^H)/2 — used after every matrix construction to kill round-off asymmetry."""
    return 0.5 * (a + a.conj().swapaxes(-1, -2))


def real_trace_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Real trace inner product <A, B> = Re tr(A^H B).

    Both arguments must be Hermitian; an imaginary residue above
    IMAG_RESIDUE_TOL (relative) raises NumericsError.
    """
    t = complex(np.einsum("ij,ij->", a.conj(), b))
    if abs(t.imag) > IMAG_RESIDUE_TOL * (1.0 + abs(t)):
        raise NumericsError(
            f"imaginary residue {t.imag:.3e} in trace inner product of supposedly Hermitian matrices"
        )
    return float(t.real)


def db_to_linear(db: float) -> float:
    """Convert a dB value to linear scale (10^(db/10))."""
    return float(10.0 ** (np.asarray(db) / 10.0))


def steering_vector(theta: float, m: int) -> np.ndarray:
    """Steering vector of an m-element half-wavelength ULA at angle theta (radians).

    Entry i is exp(j*pi*i*sin(theta)); entry 0 is always 1.
    """
    if m < 1:
        raise ValueError(f"antenna count must be >= 1, got {m}")
    return np.exp(1j * np.pi * np.arange(m) * np.sin(theta))


def steering_matrix(theta: np.ndarray, m: int) -> np.ndarray:
    """Stack steering vectors for a grid of angles into an (M, Q) matrix."""
    theta = np.asarray(theta, dtype=float)
    return np.exp(1j * np.pi * np.arange(m)[:, None] * np.sin(theta)[None, :])


@dataclass(frozen=True)
class Scenario:
    """Full ISAC problem data.

    channels : (K, M) complex user channels, all rows nonzero
    gamma    : (K,) SINR targets, linear scale, > 0
    sigma2   : (K,) noise powers, > 0
    theta    : (Q,) sensing grid angles in radians
    d        : (Q,) desired beampattern values, > 0
    eta      : beampattern-MSE budget, > 0
    """

    channels: np.ndarray
    gamma: np.ndarray
    sigma2: np.ndarray
    theta: np.ndarray
    d: np.ndarray
    eta: float

    def __post_init__(self):
        object.__setattr__(self, "channels", np.array(self.channels, dtype=complex))
        for name in ("gamma", "sigma2", "theta", "d"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        object.__setattr__(self, "eta", float(self.eta))
        if self.channels.ndim != 2:
            raise ValueError("channels must be a (K, M) array")
        k, _ = self.channels.shape
        if self.gamma.shape != (k,) or self.sigma2.shape != (k,):
            raise ValueError("gamma and sigma2 must have one entry per user")
        if self.theta.shape != self.d.shape or self.theta.ndim != 1 or self.theta.size < 1:
            raise ValueError("theta and d must be 1-d arrays of equal positive length")
        if not (np.all(self.gamma > 0) and np.all(self.sigma2 > 0) and self.eta > 0):
            raise ValueError("gamma, sigma2 and eta must be strictly positive")
        if not np.all(self.d > 0):
            raise ValueError("desired beampattern values must be strictly positive")
        if np.any(np.all(self.channels == 0, axis=1)):
            raise ValueError("channel vectors must be nonzero")
        for name in ("channels", "gamma", "sigma2", "theta", "d"):
            getattr(self, name).flags.writeable = False

    @property
    def K(self) -> int:
        return self.channels.shape[0]

    @property
    def M(self) -> int:
        return self.channels.shape[1]

    @property
    def Q(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class SensingOperator:
    """Residual matrices of the optimally-scaled beampattern fit.

    matrices     : (Q, M, M) Hermitian stack; <R, matrices[q]> is the fit
                   residual of a^H R a against the desired pattern at angle q
    desired_norm : sum of squared desired values, sum_q d_q^2
    """

    matrices: np.ndarray
    desired_norm: float

    def __post_init__(self):
        object.__setattr__(self, "matrices", np.array(self.matrices, dtype=complex))
        object.__setattr__(self, "desired_norm", float(self.desired_norm))
        if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
            raise ValueError("matrices must be a (Q, M, M) stack")
        self.matrices.flags.writeable = False

    @property
    def Q(self) -> int:
        return self.matrices.shape[0]

    @property
    def M(self) -> int:
        return self.matrices.shape[1]


def build_sensing_operator(theta: np.ndarray, d: np.ndarray, m: int) -> SensingOperator:
    """Construct the sensing operator for a grid of angles and desired pattern.

    matrices[q] = d_q * (sum_q' d_q' a_q' a_q'^H) / (sum_q' d_q'^2) - a_q a_q^H,
    which makes <R, matrices[q]> the residual alpha*(R) d_q - a_q^H R a_q of the
    optimally scaled fit.  By construction sum_q d_q * matrices[q] == 0.
    """
    theta = np.asarray(theta, dtype=float)
    d = np.asarray(d, dtype=float)
    if theta.size == 0:
        raise ValueError("sensing grid must contain at least one angle")
    if theta.shape != d.shape:
        raise ValueError("theta and d must have matching shapes")
    if not np.all(d > 0):
        raise ValueError("desired beampattern values must be strictly positive")
    a = steering_matrix(theta, m)  # (M, Q)
    outer = np.einsum("mq,nq->qmn", a, a.conj())  # a_q a_q^H
    denom = float(np.sum(d**2))
    weighted_sum = np.einsum("q,qmn->mn", d, outer)
    mats = d[:, None, None] * weighted_sum[None, :, :] / denom - outer
    return SensingOperator(matrices=hermitian_part(mats), desired_norm=denom)


def optimal_scaling(r: np.ndarray, theta: np.ndarray, d: np.ndarray) -> float:
    """Scaling alpha* minimizing the beampattern MSE of R against the desired pattern.

    alpha* = sum_q d_q (a_q^H R a_q) / sum_q d_q^2; nonnegative whenever R is PSD.
    """
    theta = np.asarray(theta, dtype=float)
    d = np.asarray(d, dtype=float)
    a = steering_matrix(theta, r.shape[0])
    pattern = np.real(np.einsum("mq,mn,nq->q", a.conj(), r, a))
    return float(np.dot(d, pattern) / np.sum(d**2))


def sensing_map(v: np.ndarray, op: SensingOperator) -> np.ndarray:
    """Residual vector [<V, M_q>]_q of a Hermitian matrix V under the operator."""
    v = np.asarray(v)
    if v.shape != (op.M, op.M):
        raise ValueError(f"matrix shape {v.shape} does not match operator dimension {op.M}")
    t = np.einsum("ij,qij->q", v.conj(), op.matrices)
    scale = 1.0 + float(np.max(np.abs(t), initial=0.0))
    if np.max(np.abs(t.imag)) > IMAG_RESIDUE_TOL * scale:
        raise NumericsError("non-Hermitian input to sensing_map")
    return t.real


def beampattern_mse(r: np.ndarray, op: SensingOperator) -> float:
    """Beampattern MSE at the optimal scaling: (1/Q) sum_q <R, M_q>^2."""
    res = sensing_map(r, op)
    return float(np.dot(res, res) / op.Q)


def sinr(k: int, covariances: np.ndarray, scenario: Scenario) -> float:
    """Achieved SINR of user k for a stack of per-user covariances (K, M, M).

    Numerator h_k^H V_k h_k; interference sum_{j != k} h_k^H V_j h_k plus noise.
    """
    if not 0 <= k < scenario.K:
        raise IndexError(f"user index {k} out of range for K={scenario.K}")
    h = scenario.channels[k]
    per_user = np.real(np.einsum("m,kmn,n->k", h.conj(), covariances, h))
    signal = per_user[k]
    interference = float(np.sum(per_user)) - signal
    return float(signal / (interference + scenario.sigma2[k]))


@dataclass(frozen=True)
class BeamformingSolution:
    """Per-user transmit covariances with their powers and total-power objective."""

    covariances: np.ndarray  # (K, M, M) Hermitian PSD
    powers: np.ndarray  # (K,) nonnegative
    objective: float  # sum_k tr(V_k)

    def __post_init__(self):
        object.__setattr__(self, "covariances", np.array(self.covariances, dtype=complex))
        object.__setattr__(self, "powers", np.array(self.powers, dtype=float))
        object.__setattr__(self, "objective", float(self.objective))

    @classmethod
    def from_covariances(cls, covariances: np.ndarray, powers: np.ndarray | None = None):
        covariances = np.asarray(covariances, dtype=complex)
        traces = np.real(np.trace(covariances, axis1=1, axis2=2))
        if powers is None:
            powers = traces
        return cls(covariances=covariances, powers=powers, objective=float(np.sum(traces)))

    @property
    def total_covariance(self) -> np.ndarray:
        return hermitian_part(np.sum(self.covariances, axis=0))


@dataclass(frozen=True)
class ViolationReport:
    """Relative constraint shortfalls of a candidate solution.

    sinr_violation: max_k max(0, gamma_k - SINR_k) / gamma_k
    mse_violation : max(0, E - eta) / eta
    """

    sinr_violation: float
    mse_violation: float
    obj: float

    def __post_init__(self):
        for name in ("sinr_violation", "mse_violation", "obj"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def max_violation(self) -> float:
        return max(self.sinr_violation, self.mse_violation)


def check_solution(
    scenario: Scenario,
    solution: BeamformingSolution,
    tol: float = 0.0,
    op: SensingOperator | None = None,
) -> ViolationReport:
    """Evaluate the relative SINR/MSE constraint violations of a solution.

    Violations at or below `tol` are clamped to zero, so zero violations mean
    every constraint holds within `tol` (relative).
    """
    if solution.covariances.shape != (scenario.K, scenario.M, scenario.M):
        raise ValueError("solution covariances do not match scenario dimensions")
    if op is None:
        op = build_sensing_operator(scenario.theta, scenario.d, scenario.M)
    shortfalls = [
        max(0.0, (scenario.gamma[k] - sinr(k, solution.covariances, scenario)) / scenario.gamma[k])
        for k in range(scenario.K)
    ]
    mse = beampattern_mse(solution.total_covariance, op)
    mse_shortfall = max(0.0, (mse - scenario.eta) / scenario.eta)
    sv = max(shortfalls)
    return ViolationReport(
        sinr_violation=sv if sv > tol else 0.0,
        mse_violation=mse_shortfall if mse_shortfall > tol else 0.0,
        obj=solution.objective,
    )
