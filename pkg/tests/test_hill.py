import math

import numpy as np
import pytest

from conftest import circ_dist
from ecorbits import FinderConfig
from ecorbits.dynamics import DomainError, normalized_system_K
from ecorbits.hill import (K_L, SPECIAL_ANGLES, HillParams, detect_periodic_ec,
                           ejection_initial_hill_lc, equilibria, hill_bifurcations, hill_find_ec,
                           hill_integral, hill_lc_integral, hill_lc_rhs, hill_lc_system,
                           hill_rhs, hill_scaled_rhs, hill_synodic_system, lc_equilibria)
from ecorbits.integrator import propagate


def lc_state_on_level(u, v, vp, K):
    rho, D = u * u + v * v, u * u - v * v
    return np.array([u, v, math.sqrt(12 * rho * D * D + 8 - 4 * K * rho - vp * vp), vp])


class TestParams:
    def test_basic(self):
        p = HillParams(8, 12.0)
        assert p.L == pytest.approx(3.0) and p.eps == pytest.approx(12 ** -0.5)
        assert p.mu == 1.0 and math.isnan(p.C) and p.energy == 12.0
        assert HillParams.from_L(8, 3.0).K == pytest.approx(12.0, rel=1e-15)
        assert HillParams(2, 4.0).below_k_l and not p.below_k_l

    @pytest.mark.parametrize("n, K", [(0, 5.0), (1.5, 5.0), (1, 0.0), (1, math.inf)])
    def test_invalid(self, n, K):
        with pytest.raises(DomainError):
            HillParams(n, K)


class TestFields:
    def test_singular_origin(self):
        with pytest.raises(DomainError):
            hill_rhs([0.0, 0.0, 1.0, 0.0])

    def test_synodic_field(self):
        x, y, vx, vy = 0.4, -0.3, 0.2, 0.5
        r3 = math.hypot(x, y) ** 3
        expect = [vx, vy, 2 * vy + 3 * x - x / r3, -2 * vx - y / r3]
        assert hill_rhs([x, y, vx, vy]) == pytest.approx(expect, abs=1e-14)

    def test_equilibria_at_rest(self):
        for x, y in equilibria():
            assert np.abs(hill_rhs([x, y, 0, 0])).max() < 1e-14
            assert hill_integral([x, y, 0, 0]) == pytest.approx(K_L)

    def test_lc_equilibria(self):
        for u, v in lc_equilibria():
            assert np.abs(hill_lc_rhs([u, v, 0, 0], K_L)).max() < 1e-13
            assert abs(hill_lc_integral([u, v, 0, 0], K_L)) < 1e-13

    def test_ejection_speed(self):
        for th in (0.0, 0.4, 2.0):
            y = ejection_initial_hill_lc(th)
            assert math.hypot(y[2], y[3]) == pytest.approx(math.sqrt(8.0))
            assert abs(hill_lc_integral(y, 3.3)) < 1e-14

    def test_lc_matches_synodic(self):
        # chain rule through x + iy = (u + iv)^2 and dt = 4 r ds
        K = 3.7
        u, v, up, vp = lc_state_on_level(0.6, -0.35, 0.4, K)
        upp, vpp = hill_lc_rhs([u, v, up, vp], K)[2:]
        rho = u * u + v * v
        xs, ys = 2 * (u * up - v * vp), 2 * (up * v + u * vp)
        xss = 2 * (up * up + u * upp - vp * vp - v * vpp)
        yss = 2 * (upp * v + 2 * up * vp + u * vpp)
        rs = 2 * (u * up + v * vp)
        syn = [u * u - v * v, 2 * u * v, xs / (4 * rho), ys / (4 * rho)]
        acc = [(xss * rho - xs * rs) / (16 * rho**3), (yss * rho - ys * rs) / (16 * rho**3)]
        assert hill_integral(syn) == pytest.approx(K, abs=1e-13)
        assert hill_rhs(syn)[2:] == pytest.approx(acc, abs=1e-13)

    def test_integrals_conserved(self):
        y0 = np.array([0.5, 0.1, 0.0, 0.6])
        y, s = propagate(hill_synodic_system(hill_integral(y0)), y0, 0.0, 3.0)
        assert s.max_integral_residual < 1e-10
        assert hill_integral(y) == pytest.approx(hill_integral(y0), abs=1e-10)
        K = 4.0
        z0 = lc_state_on_level(0.5, 0.2, -0.3, K)
        z, s = propagate(hill_lc_system(K), z0, 0.0, 2.0)
        assert abs(hill_lc_integral(z, K)) < 1e-9 and s.max_integral_residual < 1e-9

    def test_scaled_is_restricted_limit(self):
        # the restricted scaled field tends to the Hill one like (1 - mu)^(1/3)
        s = np.array([0.3, -0.2, 0.5, 0.7])
        d = [np.abs(normalized_system_K(1 - dm, 5.0).rhs(0.0, s) - hill_scaled_rhs(s, 5.0)).max()
             for dm in (1e-3, 1e-6)]
        assert d[0] / d[1] == pytest.approx(10.0, rel=0.05)
        assert d[1] < 1e-6


class TestRoots:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_four_orbits(self, n):
        roots = hill_find_ec(HillParams(n, 8.0), FinderConfig(grid_size=256))
        assert len(roots) == 4
        assert [r.symmetry for r in roots] == ["x", "y", "x", "y"]
        assert all(r.certified for r in roots)

    def test_quarter_turn_symmetry(self):
        roots = np.array([r.theta0_star for r in hill_find_ec(HillParams(3, 8.0), FinderConfig(grid_size=256))])
        assert circ_dist(np.sort((roots + math.pi / 2) % math.pi), np.sort(roots)).max() < 1e-9

    def test_reduced_scan_agrees(self):
        p = HillParams(2, 8.0)
        full = [r.theta0_star for r in hill_find_ec(p, FinderConfig(grid_size=256))]
        red = [r.theta0_star for r in hill_find_ec(p, FinderConfig(grid_size=256), reduced=True)]
        assert circ_dist(np.sort(full), np.sort(red)).max() < 1e-10

    def test_no_special_roots_generic(self):
        assert detect_periodic_ec(HillParams(3, 8.0), FinderConfig(grid_size=256)) == []


@pytest.fixture(scope="module")
def found(hill_cont):
    return detect_periodic_ec(5, hill_cont, K_range=(5.1, 4.6))


class TestPeriodic:
    def test_events_on_special_angles(self, found):
        assert len(found) == 4
        for f in found:
            assert min(circ_dist(f.theta0, SPECIAL_ANGLES)) < 1e-12
            assert f.n == 5 and f.kind == "composed"

    def test_pitchfork_pair(self, found):
        top = [f for f in found if f.K == pytest.approx(5.027148137, abs=1e-6)]
        assert {round(f.theta0, 6) for f in top} == {0.0, round(math.pi / 2, 6)}
        assert all(f.families == ("beta", "delta") and f.symmetry == "y" for f in top)
        assert all(f.event.kind == "pitchfork_from_branch" for f in top)

    def test_collapse_pair(self, found):
        low = [f for f in found if f.K == pytest.approx(4.728351970, abs=1e-6)]
        assert len(low) == 2
        assert all(f.families == ("alpha", "gamma") and f.event.kind == "collapse" for f in low)

    def test_sorted(self, found):
        assert [f.K for f in found] == sorted((f.K for f in found), reverse=True)

    def test_precomputed_events(self, hill_cont, found):
        events = hill_bifurcations(5, (5.1, 4.6), hill_cont).events
        assert detect_periodic_ec(5, hill_cont, events=events) == found
