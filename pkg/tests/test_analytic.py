import math
import random

import numpy as np
import pytest
import sympy as sp

from conftest import circ_dist
from ecorbits import FinderConfig, Params, find_roots, momentum_at_nth_min
from ecorbits.analytic import (SeriesCoeffs, fundamental_matrix_kepler, hill_scaling_curves,
                               kepler_lc_ejection, kepler_time, momentum_series,
                               momentum_series_terms, predicted_roots, series_state,
                               tau_star_series, u_series)
from ecorbits.dynamics import (DomainError, ejection_initial_normalized, normalized_rhs,
                               normalized_system_K)
from ecorbits.integrator import IntegratorConfig, propagate

TIGHT = IntegratorConfig(abs_tol=1e-14, rel_tol=1e-14)


def numeric_state(mu, eps, theta0, tau):
    y, _ = propagate(normalized_system_K(mu, eps**-2),
                     ejection_initial_normalized(theta0).as_array(), 0.0, tau, TIGHT)
    return y


def kepler_flow(n, xi, y0, T):
    """mu = 0 flow in the time T = tau / n with T-derivatives as velocities."""
    eps = xi / n ** (1.0 / 3.0)
    y0 = np.asarray(y0, dtype=float)
    y, _ = propagate(normalized_system_K(0.0, eps**-2),
                     np.array([y0[0], y0[1], y0[2] / n, y0[3] / n]), 0.0, n * T, TIGHT)
    return np.array([y[0], y[1], n * y[2], n * y[3]])


class TestSeriesTerms:
    @pytest.mark.parametrize("j", [1, 2, 4, 5, 7])
    def test_vanishing_orders(self, j):
        for v in u_series(j, np.linspace(0, 6, 7), 0.4, 0.3):
            assert np.all(v == 0.0)

    @pytest.mark.parametrize("j", [-1, 11])
    def test_out_of_range(self, j):
        with pytest.raises(DomainError):
            u_series(j, 1.0, 0.1, 0.1)

    def test_order_zero(self):
        U, V, Ud, Vd = u_series(0, 0.7, 0.3, 0.5)
        assert U == pytest.approx(math.cos(0.3) * math.sin(0.7))
        assert Vd == pytest.approx(math.sin(0.3) * math.cos(0.7))

    @pytest.mark.parametrize("j", [3, 6, 8, 9, 10])
    def test_terms_start_at_rest(self, j):
        assert np.allclose(u_series(j, 0.0, 0.8, 0.4), 0.0, atol=1e-14)

    def test_zero_eps_is_oscillator(self):
        s = series_state(1.3, 0.2, 0.0, 0.5)
        assert s == pytest.approx([math.cos(0.2) * math.sin(1.3), math.sin(0.2) * math.sin(1.3),
                                   math.cos(0.2) * math.cos(1.3), math.sin(0.2) * math.cos(1.3)])

    def test_order_validation(self):
        with pytest.raises(DomainError):
            series_state(1.0, 0.1, 0.1, 0.1, order=11)
        with pytest.raises(DomainError):
            SeriesCoeffs(order=12)
        with pytest.raises(DomainError):
            momentum_series(1, 0.1, 0.1, 0.1, order=5)


class TestSeriesAccuracy:
    @pytest.mark.parametrize("mu", [0.1, 0.9])
    def test_state_remainder(self, mu):
        errs = []
        for eps in (0.2, 0.1):
            errs.append(max(np.abs(numeric_state(mu, eps, th, 2 * math.pi)
                                   - series_state(2 * math.pi, th, eps, mu)).max()
                            for th in (0.3, 1.2, 2.0)))
        assert errs[0] / errs[1] > 2**10
        assert errs[1] < 1e-8

    def test_equations_satisfied(self):
        # residual of the scaled equations drops like eps^11
        mu, th, tau = 0.3, 0.7, 2.2
        res = []
        for eps in (0.2, 0.1):
            h = 1e-3
            rhs = normalized_rhs(series_state(tau, th, eps, mu), mu, Params.from_K(mu, 1, eps**-2).C)
            d = [series_state(tau + k * h, th, eps, mu)[2:] for k in (-2, -1, 1, 2)]
            acc = (d[0] - 8 * d[1] + 8 * d[2] - d[3]) / (12 * h)
            res.append(np.abs(acc - rhs[2:]).max())
        assert res[0] / res[1] > 2**9

    @pytest.mark.parametrize("mu", [0.1, 0.9])
    def test_tau_star(self, mu):
        cfg = FinderConfig(integrator=TIGHT)
        errs = []
        for eps in (0.2, 0.1):
            p = Params.from_K(mu, 2, eps**-2)
            errs.append(max(abs(momentum_at_nth_min(p, th, cfg).tau_star
                                - tau_star_series(2, th, eps, mu)) for th in (0.3, 1.2, 2.0)))
        assert errs[0] / errs[1] > 2**10

    def test_coeffs_wrapper(self):
        c = SeriesCoeffs(order=10, mu=0.2)
        assert c.momentum(2, 0.4, 0.3) == momentum_series(2, 0.4, 0.3, 0.2)
        assert c.tau_star(1, 0.4, 0.3) == tau_star_series(1, 0.4, 0.3, 0.2)
        assert np.array_equal(c.state(1.0, 0.4, 0.3), series_state(1.0, 0.4, 0.3, 0.2))


class TestMomentumSeries:
    def test_zero_eps(self):
        assert momentum_series(3, 0.7, 0.0, 0.4) == 0.0

    def test_leading_coefficient(self):
        th = np.linspace(0, math.pi, 9)
        lead = momentum_series_terms(2, th, 0.1)[6]
        np.testing.assert_allclose(lead, -15 * 0.1 * 2 * math.pi / 4 * np.sin(4 * th))

    def test_order_six_equals_seven(self):
        assert momentum_series(2, 0.3, 0.2, 0.1, 6) == momentum_series(2, 0.3, 0.2, 0.1, 7)

    def test_kepler_vanishes(self):
        assert momentum_series(2, 0.3, 0.3, 0.0) == 0.0


class TestPredictedRoots:
    def test_kepler_degenerate(self):
        assert predicted_roots(2, 0.2, 0.0).degenerate

    def test_four_near_quarters(self):
        pr = predicted_roots(2, 0.15, 0.1)
        assert len(pr.roots) == 4 and not pr.seeds_unresolved
        assert circ_dist(pr.roots, np.arange(4) * math.pi / 4).max() < 0.05

    @pytest.mark.parametrize("n", [1, 2])
    def test_error_scales_as_eps5(self, fast_finder, n):
        scaled = []
        for K in (20.0, 40.0, 80.0):
            p = Params.from_K(0.1, n, K)
            num = [r.theta0_star for r in find_roots(p, fast_finder)]
            pred = predicted_roots(n, p.eps, 0.1).roots
            scaled.append(circ_dist(num, pred).max() / p.eps**5)
        assert max(scaled) / min(scaled) < 1.1


class TestKepler:
    def test_time(self):
        assert kepler_time(2, 0.0, 1.0) == 0.0
        assert kepler_time(1, 0.5, math.pi) == pytest.approx(2 * math.pi * 0.125)

    def test_matches_integration(self):
        rng = random.Random(7)
        worst = 0.0
        for _ in range(32):
            n, th = rng.randint(1, 3), rng.uniform(0, 2 * math.pi)
            xi, T = rng.uniform(0, 0.35), rng.uniform(0, 2 * math.pi)
            st, _ = kepler_lc_ejection(n, th, xi, T)
            y = kepler_flow(n, xi, [0, 0, n * math.cos(th), n * math.sin(th)], T)
            worst = max(worst, np.abs(y - st.as_array()).max())
        assert worst < 1e-9

    def test_negative_xi(self):
        with pytest.raises(DomainError):
            kepler_lc_ejection(1, 0.0, -0.1, 1.0)


class TestFundamentalMatrix:
    def test_identity_at_start(self):
        np.testing.assert_allclose(fundamental_matrix_kepler(2, 0.3, 0.2, 0.0), np.eye(4), atol=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("theta0", [0.3, 1.1, 2.5])
    def test_finite_differences(self, n, theta0):
        xi, T, h = 0.25, 1.7, 1e-5
        y0 = np.array([0, 0, n * math.cos(theta0), n * math.sin(theta0)])
        J = np.empty((4, 4))
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            J[:, k] = (kepler_flow(n, xi, y0 + e, T) - kepler_flow(n, xi, y0 - e, T)) / (2 * h)
        np.testing.assert_allclose(fundamental_matrix_kepler(n, theta0, xi, T), J, atol=1e-6)

    def test_unimodular(self):
        # the linearized flow preserves phase-space volume
        for T in (0.5, 2.0, 4.0):
            assert np.linalg.det(fundamental_matrix_kepler(2, 0.7, 0.3, T)) == pytest.approx(1.0, abs=1e-12)

    def test_symbolic_jacobian(self):
        # exact Jacobian of the mu = 0 field along the closed-form orbit
        T, th, x = sp.symbols("T theta x", real=True)
        n = 2
        U, V, Ud, Vd = sp.symbols("U V Ud Vd")
        rho = U**2 + V**2
        F = sp.Matrix([Ud, Vd, -n**2 * U + 8 * rho * Vd * x**3 + 12 * rho**2 * U * x**6,
                       -n**2 * V - 8 * rho * Ud * x**3 + 12 * rho**2 * V * x**6])
        Jf = sp.lambdify((U, V, Ud, Vd, x), F.jacobian([U, V, Ud, Vd]), "numpy")
        theta0, xi, Tn, h = 0.9, 0.3, 1.3, 1e-4
        X = [fundamental_matrix_kepler(n, theta0, xi, Tn + d) for d in (-h, 0.0, h)]
        st, _ = kepler_lc_ejection(n, theta0, xi, Tn)
        dX = (X[2] - X[0]) / (2 * h)
        lhs = np.array(Jf(*st.as_array(), xi), dtype=float) @ X[1]
        np.testing.assert_allclose(dX, lhs, atol=1e-7)


def test_hill_scaling_curves():
    assert hill_scaling_curves(1, 8) == pytest.approx(2 ** (2 / 3) * 4)
    assert hill_scaling_curves(2, 1) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        hill_scaling_curves(0.5, 1)
