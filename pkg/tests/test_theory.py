"""Bound-term algebra against closed forms, and simulation-backed verification."""

import numpy as np
import pytest

from oclopt.stream import DriftingQuadraticSpec
from oclopt.theory import (AssumptionError, BoundInputs, bound_terms, check_rates,
                           default_radius, make_rate_schedule,
                           simulate_sgd_trajectories, verify_bound)


def quad(dim=3, mu=0.25, L=1.0, v=0.0, noise=0.3, c0=None):
    c0 = (2.0, -1.0, 0.5)[:dim] if c0 is None else c0
    vel = tuple(v * np.ones(dim) / np.sqrt(dim))
    return DriftingQuadraticSpec(dim=dim, mu=mu, l_smooth=L, center0=tuple(c0),
                                 velocity=vel, noise_radius=noise)


class TestBoundTerms:
    def test_stationary_reduction_t3_zero(self):
        n = 100
        alphas = np.full(n, 0.1)
        finals = np.linspace(1.0, 0.2, n)
        stationary = BoundInputs(lipschitz=1.0, rho=0.3, alphas=alphas,
                                 initial_loss=2.0, final_losses=finals, chis=None)
        drifting = BoundInputs(lipschitz=1.0, rho=0.3, alphas=alphas,
                               initial_loss=2.0, final_losses=finals,
                               chis=np.zeros(n))
        for k in (0, 10, 99):
            ts = bound_terms(stationary, k)
            td = bound_terms(drifting, k)
            assert ts[2] == 0.0
            assert np.allclose(ts, td)

    def test_constant_alpha_t2_closed_form(self):
        # T2 = L rho^2 alpha / (2 - L alpha), constant over k
        L, rho, alpha = 1.0, 0.4, 0.3
        n = 200
        inputs = BoundInputs(lipschitz=L, rho=rho, alphas=np.full(n, alpha),
                             initial_loss=1.0, final_losses=np.zeros(n))
        expected = L * rho ** 2 * alpha / (2.0 - L * alpha)
        for k in (0, 7, 50, 199):
            _, t2, _ = bound_terms(inputs, k)
            assert np.isclose(t2, expected, rtol=1e-12)

    def test_constant_chi_t3_limit_and_annealing_blowup(self):
        # constant alpha: T3 -> 2 chi / (2 alpha - L alpha^2); halving alpha
        # toward zero makes T3 grow without bound (closed-form partial sums)
        L, chi, alpha = 1.0, 0.05, 0.3
        n = 4096
        const = BoundInputs(lipschitz=L, rho=0.0, alphas=np.full(n, alpha),
                            initial_loss=1.0, final_losses=np.zeros(n),
                            chis=np.full(n, chi))
        t3_limit = 2.0 * chi / (2.0 * alpha - L * alpha ** 2)
        assert np.isclose(bound_terms(const, n - 1)[2], t3_limit, rtol=1e-9)

        halved = make_rate_schedule("halving", alpha, n, halve_every=64)
        annealed = BoundInputs(lipschitz=L, rho=0.0, alphas=halved,
                               initial_loss=1.0, final_losses=np.zeros(n),
                               chis=np.full(n, chi))
        ks = [63, 255, 1023, 4095]
        t3s = [bound_terms(annealed, k)[2] for k in ks]
        assert all(b > a for a, b in zip(t3s, t3s[1:]))
        # closed-form oracle: denominator converges to a geometric-series sum
        # while the chi sum grows linearly, so T3(k) ~ 2 chi (k+1) / D_inf
        a_terms = alpha * 0.5 ** np.floor(np.arange(n) / 64)
        d_inf = float(np.sum(2 * a_terms - L * a_terms ** 2))
        expected_last = 2.0 * chi * n / d_inf
        assert np.isclose(t3s[-1], expected_last, rtol=1e-9)
        assert t3s[-1] > 10 * t3_limit

    def test_rate_preconditions_enforced(self):
        with pytest.raises(AssumptionError):
            check_rates(np.array([0.1, 0.6]), lipschitz=1.0)   # alpha >= L/2
        with pytest.raises(AssumptionError):
            check_rates(np.array([1.9]), lipschitz=4.0)        # denominator <= 0
        inputs = BoundInputs(lipschitz=1.0, rho=0.1, alphas=np.array([0.7]),
                             initial_loss=1.0, final_losses=np.array([0.0]))
        with pytest.raises(AssumptionError):
            bound_terms(inputs, 0)

    def test_negative_chi_rejected(self):
        with pytest.raises(AssumptionError):
            BoundInputs(lipschitz=1.0, rho=0.1, alphas=np.array([0.1]),
                        initial_loss=1.0, final_losses=np.array([0.0]),
                        chis=np.array([-0.1]))


class TestSimulation:
    def test_noiseless_contraction_matches_eigenmode_oracle(self):
        # per eigenmode lambda: theta - c decays by (1 - alpha lambda) each
        # step, so ||grad||^2 follows the exact closed form
        q = quad(v=0.0, noise=0.0)
        alpha = 0.3
        k_max = 30
        alphas = np.full(k_max + 2, alpha)
        grad_sq, _, _ = simulate_sgd_trajectories(q, alphas, k_max, n_seeds=2)
        eig = q.eigenvalues()
        c = q.center(1)
        theta0 = np.zeros(q.dim)
        for j in (0, 5, 17, 30):
            mode = (theta0 - c) * (1.0 - alpha * eig) ** j
            expected = float(np.sum((eig * mode) ** 2))
            assert np.allclose(grad_sq[:, j], expected, rtol=1e-10)

    def test_default_radius_is_ten_times_initial_center(self):
        q = quad()
        assert np.isclose(default_radius(q), 10.0 * np.linalg.norm(q.center(1)))

    def test_stationary_invsqrt_bound_holds_and_vanishes(self):
        q = quad(v=0.0, noise=0.3)
        k_max = 1500
        alphas = make_rate_schedule("invsqrt", 0.3, k_max + 2)
        report = verify_bound(q, alphas, k_max, n_seeds=12, base_seed=1)
        assert report.stationary
        assert report.all_hold
        ks = [c.k for c in report.checkpoints]
        rhs = [c.rhs for c in report.checkpoints]
        lhs = [c.lhs for c in report.checkpoints]
        assert rhs[-1] < rhs[0]
        assert lhs[-1] < lhs[0]

    def test_drift_with_annealing_t3_dominates(self):
        # persistent drift + rate annealed toward zero: the non-stationarity
        # term grows and the achievable gradient norm stops shrinking
        q = quad(v=0.01, noise=0.2)
        k_max = 1200
        alphas = make_rate_schedule("halving", 0.3, k_max + 2, halve_every=100)
        report = verify_bound(q, alphas, k_max, n_seeds=12, base_seed=2)
        assert report.all_hold
        t3 = [c.t3 for c in report.checkpoints]
        assert all(b >= a for a, b in zip(t3[2:], t3[3:]))
        assert t3[-1] > t3[0]
        late = report.checkpoints[-1]
        assert late.t3 > late.t1 and late.t3 > late.t2
        # min gradient norm stalls: the last checkpoints stop improving
        lhs = [c.lhs for c in report.checkpoints]
        assert lhs[-1] > 0.5 * lhs[-2]

    def test_rate_violation_refuses_to_certify(self):
        q = quad()
        alphas = np.full(100, 0.6)   # >= L/2 = 0.5
        with pytest.raises(AssumptionError):
            verify_bound(q, alphas, 50, n_seeds=3)

    def test_excursion_flagging(self):
        q = quad(v=0.0, noise=0.0)
        alphas = np.full(40, 0.1)
        report = verify_bound(q, alphas, 20, n_seeds=2, radius=1e-6)
        assert report.excursions == 2


class TestRateSchedules:
    def test_shapes_and_values(self):
        assert np.allclose(make_rate_schedule("constant", 0.2, 3), [0.2] * 3)
        inv = make_rate_schedule("invsqrt", 0.2, 4)
        assert np.allclose(inv, 0.2 / np.sqrt([1, 2, 3, 4]))
        halv = make_rate_schedule("halving", 0.2, 5, halve_every=2)
        assert np.allclose(halv, [0.2, 0.2, 0.1, 0.1, 0.05])

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            make_rate_schedule("warmup", 0.1, 5)


class TestT3ScaleMonotonicity:
    def test_shrinking_the_schedule_inflates_t3(self):
        # fixed chi > 0 and a pointwise-decreasing alpha sequence: scaling the
        # whole schedule down never decreases T3 at the horizon
        L, chi, n = 1.0, 0.05, 512
        base = make_rate_schedule("invsqrt", 0.4, n)
        t3s = []
        for scale in (1.0, 0.8, 0.6, 0.4, 0.2, 0.1, 0.05):
            inputs = BoundInputs(lipschitz=L, rho=0.0, alphas=scale * base,
                                 initial_loss=1.0, final_losses=np.zeros(n),
                                 chis=np.full(n, chi))
            t3s.append(bound_terms(inputs, n - 1)[2])
        assert all(b >= a for a, b in zip(t3s, t3s[1:]))
