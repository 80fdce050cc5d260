import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isacbf.downlink import (
    DownlinkProblem,
    FpiStatus,
    NotEvaluableError,
    RecoveryError,
    assess_boundedness,
    certificate_holds,
    dual_matrix,
    fpi_solve,
    interference_map,
    interference_map_raw,
    recover_primal,
    solve_power_allocation,
    weighting_matrix,
)
from isacbf.model import build_sensing_operator, hermitian_part

from conftest import random_channels, random_hermitian


def scalar_problem(b=1.0, gamma=1.0, sigma2=1.0, h=1.0):
    return DownlinkProblem(
        weight=np.array([[b]], dtype=complex),
        channels=np.array([[h]], dtype=complex),
        gamma=[gamma],
        sigma2=[sigma2],
    )


def identity_problem(rng, k, m, gamma=None, sigma2=None):
    gamma = np.full(k, 0.5) if gamma is None else np.asarray(gamma, dtype=float)
    sigma2 = np.ones(k) if sigma2 is None else np.asarray(sigma2, dtype=float)
    return DownlinkProblem(np.eye(m), random_channels(rng, k, m), gamma, sigma2)


class TestWeightingMatrix:
    def test_zero_multipliers(self):
        op = build_sensing_operator([0.1, 0.4, -0.2], [1.0, 1.2, 0.9], 3)
        np.testing.assert_allclose(weighting_matrix(np.zeros(3), op), np.eye(3))

    def test_unit_multiplier(self):
        op = build_sensing_operator([0.1, 0.4], [1.0, 1.2], 2)
        lam = np.array([0.0, 1.0])
        np.testing.assert_allclose(
            weighting_matrix(lam, op), np.eye(2) - 2.0 * op.matrices[1], atol=1e-14
        )

    def test_single_angle_degenerate(self):
        # single-angle operator has M_1 = 0, so B = I for any lambda
        op = build_sensing_operator([0.3], [1.1], 2)
        np.testing.assert_allclose(weighting_matrix([123.4], op), np.eye(2), atol=1e-12)

    def test_length_mismatch(self):
        op = build_sensing_operator([0.3], [1.1], 2)
        with pytest.raises(ValueError):
            weighting_matrix([1.0, 2.0], op)


class TestDualMatrix:
    def test_zero_beta(self, rng):
        prob = identity_problem(rng, 2, 3)
        np.testing.assert_allclose(dual_matrix(np.zeros(2), prob), np.eye(3))

    def test_scalar_sum(self):
        prob = scalar_problem(b=1.0)
        np.testing.assert_allclose(dual_matrix([2.0], prob), [[3.0]])

    def test_difference_psd_for_nonneg_beta(self, rng):
        prob = identity_problem(rng, 3, 4)
        beta = rng.uniform(0.0, 2.0, 3)
        diff = dual_matrix(beta, prob) - dual_matrix(np.zeros(3), prob)
        w = np.linalg.eigvalsh(diff)
        assert w[0] >= -1e-12


class TestInterferenceMap:
    def test_scalar_affine_form(self):
        # B=1, h=1, gamma=1: I(beta) = (1 + beta)/2
        prob = scalar_problem()
        for beta in (0.0, 1.0, 5.0, 99.0):
            assert interference_map([beta], prob)[0] == pytest.approx((1 + beta) / 2, rel=1e-13)

    def test_identity_weight_at_zero(self, rng):
        prob = identity_problem(rng, 3, 4, gamma=[0.5, 1.0, 2.0])
        vals = interference_map(np.zeros(3), prob)
        for k in range(3):
            expected = (prob.gamma[k] / (prob.gamma[k] + 1)) / np.linalg.norm(prob.channels[k]) ** 2
            assert vals[k] == pytest.approx(expected, rel=1e-12)

    def test_single_user_fixed_point_closed_form(self, rng):
        prob = identity_problem(rng, 1, 5, gamma=[0.7])
        beta_star = 0.7 / np.linalg.norm(prob.channels[0]) ** 2
        assert interference_map([beta_star], prob)[0] == pytest.approx(beta_star, rel=1e-12)

    def test_not_evaluable_when_negative_definite(self):
        prob = scalar_problem(b=-1.0)
        with pytest.raises(NotEvaluableError):
            interference_map([0.5], prob)  # C = -0.5 < 0

    def test_raw_keeps_sign(self):
        prob = scalar_problem(b=-1.0)
        vals, evaluable = interference_map_raw(np.array([0.5]), prob)
        assert evaluable
        assert vals[0] == pytest.approx((0.5 - 1.0) / 2.0, rel=1e-12)

    def test_monotone_on_evaluable_psd_pairs(self, rng):
        # I(beta') >= I(beta) componentwise when beta' >= beta and C(beta) is PSD
        for _ in range(20):
            k, m = 3, 4
            op = build_sensing_operator(rng.uniform(-1, 1, 6), rng.uniform(0.5, 1.5, 6), m)
            lam = rng.normal(0.0, 0.02, 6)
            prob = DownlinkProblem(
                weighting_matrix(lam, op), random_channels(rng, k, m),
                rng.uniform(0.2, 2.0, k), np.ones(k),
            )
            beta = rng.uniform(0.0, 3.0, k)
            if np.linalg.eigvalsh(dual_matrix(beta, prob))[0] <= 1e-9:
                continue
            upper = beta + rng.uniform(0.0, 2.0, k)
            assert np.all(
                interference_map(upper, prob) >= interference_map(beta, prob) - 1e-12
            )


class TestCertificate:
    def test_identity_weight_always_certified(self, rng):
        prob = identity_problem(rng, 2, 3)
        assert certificate_holds(rng.uniform(0, 10, 2), prob)

    def test_negative_definite_fails(self):
        prob = scalar_problem(b=-1.0)
        assert not certificate_holds(np.array([0.5]), prob)

    def test_range_condition_with_singular_c(self):
        # B = diag(0, 1), h = e_1, beta = 1: C = diag(1, 1) positive definite
        prob = DownlinkProblem(
            np.diag([0.0, 1.0]).astype(complex),
            np.array([[1.0, 0.0]], dtype=complex),
            [1.0],
            [1.0],
        )
        assert certificate_holds(np.array([1.0]), prob)
        # beta = 0 leaves C = diag(0, 1) singular with h outside usable range
        assert not certificate_holds(np.array([0.0]), prob)

    def test_negative_beta_fails(self, rng):
        prob = identity_problem(rng, 2, 2)
        assert not certificate_holds(np.array([-0.5, 1.0]), prob)


class TestFpiSolve:
    def test_scalar_converges_to_one(self):
        prob = scalar_problem()
        out = fpi_solve(prob)
        assert out.status is FpiStatus.CONVERGED
        assert out.beta_star[0] == pytest.approx(1.0, abs=1e-10)
        assert out.trace[0, 0] == 100.0
        assert out.residual <= 1e-12

    def test_single_user_closed_form(self, rng):
        for m in (1, 2, 4, 8):
            prob = identity_problem(rng, 1, m, gamma=[0.9])
            out = fpi_solve(prob)
            assert out.status is FpiStatus.CONVERGED
            expected = 0.9 / np.linalg.norm(prob.channels[0]) ** 2
            assert out.beta_star[0] == pytest.approx(expected, rel=1e-10)

    def test_fixed_point_residual_contract(self, rng):
        prob = identity_problem(rng, 3, 4)
        out = fpi_solve(prob)
        assert out.status is FpiStatus.CONVERGED
        gap = np.max(np.abs(out.beta_star - interference_map(out.beta_star, prob)))
        assert gap <= 1e-12

    def test_negative_weight_unbounded(self):
        # iterates decrease along (beta - 1)/2 until the map stops being evaluable
        prob = scalar_problem(b=-1.0)
        out = fpi_solve(prob)
        assert out.status is FpiStatus.UNBOUNDED
        diffs = np.diff(out.trace[:, 0])
        assert np.all(diffs <= 1e-12)

    def test_infeasible_targets_blow_up(self):
        # two users on one antenna with gamma = 10 each cannot both be served
        prob = DownlinkProblem(
            np.eye(1),
            np.array([[1.0], [0.8]], dtype=complex),
            [10.0, 10.0],
            [1.0, 1.0],
        )
        out = fpi_solve(prob)
        assert out.status is FpiStatus.UNBOUNDED
        assert np.max(out.trace) > 1e11

    def test_descent_from_above_monotone(self, rng):
        # started above the fixed point, iterates decrease monotonically
        for _ in range(10):
            prob = identity_problem(rng, 3, 3, gamma=rng.uniform(0.1, 1.0, 3))
            out = fpi_solve(prob)
            assert out.status is FpiStatus.CONVERGED
            if np.all(out.trace[1] <= out.trace[0] + 1e-12):
                diffs = np.diff(out.trace, axis=0)
                assert np.all(diffs <= 1e-9)
                assert np.all(out.trace >= out.beta_star - 1e-9)

    def test_beta0_shape_check(self, rng):
        prob = identity_problem(rng, 2, 2)
        with pytest.raises(ValueError):
            fpi_solve(prob, beta0=np.ones(3))

    def test_fixed_point_dominates_feasible_points(self, rng):
        # beta* is the componentwise maximum over the dual-feasible region
        prob = identity_problem(rng, 2, 3, gamma=[0.8, 1.5])
        out = fpi_solve(prob)
        found = 0
        while found < 20:
            beta = np.random.default_rng(found).uniform(0, 2, 2) * out.beta_star
            try:
                feasible = np.all(beta <= interference_map(beta, prob)) and certificate_holds(
                    beta, prob
                )
            except NotEvaluableError:
                feasible = False
            found += 1
            if feasible:
                assert np.all(beta <= out.beta_star + 1e-9)


class TestBoundedness:
    def test_identity_weight_bounded(self, rng):
        out = assess_boundedness(identity_problem(rng, 2, 3))
        assert out.bounded

    def test_scalar_negative_unbounded(self):
        assert not assess_boundedness(scalar_problem(b=-1.0)).bounded

    def test_ramped_multiplier_eventually_unbounded(self, rng):
        # push B = I - 2*lam*M_1 until its bottom eigenvector direction h makes
        # tr(B R) -> -inf along R = t h h^H
        op = build_sensing_operator(np.linspace(-1, 1, 5), rng.uniform(0.5, 1.5, 5), 3)
        norms = [np.linalg.norm(mq, 2) for mq in op.matrices]
        q = int(np.argmax(norms))
        lam_scalar = None
        for trial in np.geomspace(0.1, 1e4, 60):
            lam = np.zeros(5)
            lam[q] = trial
            w = np.linalg.eigvalsh(weighting_matrix(lam, op))
            if w[0] < -0.5:
                lam_scalar = trial
                break
        assert lam_scalar is not None
        lam = np.zeros(5)
        lam[q] = lam_scalar
        b = weighting_matrix(lam, op)
        w, u = np.linalg.eigh(b)
        h = u[:, 0][None, :].conj()  # channel aligned with the most negative direction
        prob = DownlinkProblem(b, h, [1.0], [1.0])
        assert not assess_boundedness(prob).bounded


class TestPowerAllocation:
    def test_single_user(self):
        p = solve_power_allocation(np.array([[4.0]]), np.array([0.5]), np.array([2.0]))
        assert p[0] == pytest.approx(0.5 * 2.0 / 4.0)

    def test_decoupled_identity(self):
        p = solve_power_allocation(np.eye(2), np.ones(2), np.ones(2))
        np.testing.assert_allclose(p, [1.0, 1.0])

    def test_two_user_coupling(self):
        g = np.array([[1.0, 0.5], [0.5, 1.0]])
        p = solve_power_allocation(g, np.ones(2), np.ones(2))
        np.testing.assert_allclose(p, [2.0, 2.0], rtol=1e-12)

    def test_infeasible_coupling_rejected(self):
        # off-diagonal dominance makes the tight system have no positive solution
        g = np.array([[1.0, 5.0], [5.0, 1.0]])
        with pytest.raises(RecoveryError):
            solve_power_allocation(g, np.ones(2), np.ones(2))

    def test_zero_direct_gain_rejected(self):
        with pytest.raises(RecoveryError):
            solve_power_allocation(np.zeros((1, 1)), np.ones(1), np.ones(1))


class TestRecovery:
    def test_single_user_closed_form(self, rng):
        prob = identity_problem(rng, 1, 4, gamma=[0.6], sigma2=[1.7])
        out = fpi_solve(prob)
        sol = recover_primal(out.beta_star, prob)
        h = prob.channels[0]
        expected_p = 0.6 * 1.7 / np.linalg.norm(h) ** 2
        assert sol.powers[0] == pytest.approx(expected_p, rel=1e-10)
        assert sol.total_power == pytest.approx(expected_p, rel=1e-10)
        direction = sol.covariances[0] / sol.powers[0]
        matched = np.outer(h, h.conj()) / np.linalg.norm(h) ** 2
        np.testing.assert_allclose(direction, matched, atol=1e-10)

    def test_orthogonal_channels(self):
        h = np.array([[2.0, 0.0], [0.0, 1.0]], dtype=complex)
        prob = DownlinkProblem(np.eye(2), h, [0.5, 1.5], [1.0, 2.0])
        sol = recover_primal(fpi_solve(prob).beta_star, prob)
        np.testing.assert_allclose(
            sol.powers, [0.5 * 1.0 / 4.0, 1.5 * 2.0 / 1.0], rtol=1e-10
        )

    def test_strong_duality_random_instances(self, rng):
        for _ in range(15):
            k, m = rng.integers(1, 4), rng.integers(2, 6)
            op = build_sensing_operator(rng.uniform(-1, 1, 8), rng.uniform(0.5, 1.5, 8), m)
            lam = rng.normal(0.0, 0.05, 8)
            prob = DownlinkProblem(
                weighting_matrix(lam, op),
                random_channels(rng, k, m),
                rng.uniform(0.05, 1.0, k),
                rng.uniform(0.5, 2.0, k),
            )
            out = fpi_solve(prob)
            if out.status is not FpiStatus.CONVERGED:
                continue
            sol = recover_primal(out.beta_star, prob)
            assert abs(sol.weighted_objective - sol.dual_objective) <= 1e-8 * (
                1 + abs(sol.dual_objective)
            )

    def test_sinr_constraints_tight(self, rng):
        prob = identity_problem(rng, 3, 4, gamma=[0.3, 0.7, 1.2])
        sol = recover_primal(fpi_solve(prob).beta_star, prob)
        per_user = np.real(
            np.einsum("km,jmn,kn->kj", prob.channels.conj(), sol.covariances, prob.channels)
        )
        for k in range(3):
            signal = per_user[k, k]
            interference = per_user[k].sum() - signal
            achieved = signal / (interference + prob.sigma2[k])
            assert achieved == pytest.approx(prob.gamma[k], rel=1e-8)

    def test_rank_one_structure(self, rng):
        prob = identity_problem(rng, 2, 4)
        sol = recover_primal(fpi_solve(prob).beta_star, prob)
        for k in range(2):
            w = np.linalg.eigvalsh(sol.covariances[k])
            assert w[-1] == pytest.approx(sol.powers[k], rel=1e-10)
            assert np.max(np.abs(w[:-1])) <= 1e-10 * w[-1]

    def test_singular_c_rejected(self):
        # C(0) at beta = 0 with B singular cannot support recovery
        prob = DownlinkProblem(
            np.diag([0.0, 1.0]).astype(complex),
            np.array([[0.0, 1.0]], dtype=complex),
            [1.0],
            [1.0],
        )
        with pytest.raises(RecoveryError):
            recover_primal(np.array([0.0]), prob)


class TestProblemValidation:
    def test_non_hermitian_weight_rejected(self, rng):
        with pytest.raises(ValueError):
            DownlinkProblem(
                np.array([[1.0, 1.0], [0.0, 1.0]]), random_channels(rng, 1, 2), [1.0], [1.0]
            )

    def test_dimension_mismatch_rejected(self, rng):
        with pytest.raises(ValueError):
            DownlinkProblem(np.eye(3), random_channels(rng, 1, 2), [1.0], [1.0])


@settings(max_examples=25)
@given(
    seed=st.integers(min_value=0, max_value=10_000),
    k=st.integers(min_value=1, max_value=4),
    m=st.integers(min_value=1, max_value=6),
)
def test_identity_weight_fpi_always_certified(seed, k, m):
    """With B = I the problem is the classical one: convergence implies a
    certified fixed point whenever the SINR targets are jointly feasible."""
    rng = np.random.default_rng(seed)
    prob = DownlinkProblem(
        np.eye(m), random_channels(rng, k, m), rng.uniform(0.05, 0.5, k), np.ones(k)
    )
    out = fpi_solve(prob)
    if out.status is FpiStatus.CONVERGED:
        assert certificate_holds(out.beta_star, prob)
        assert np.all(out.beta_star > 0)
