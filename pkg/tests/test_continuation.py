import math
import warnings

import numpy as np
import pytest

from conftest import circ_dist
from ecorbits import ContinuationConfig, FinderConfig, Params, cl1, find_roots
from ecorbits.continuation import (Diagram, c_hat_curve, continue_families, continue_family,
                                   detect_bifurcations, detect_bifurcations_params, diagram)

C_HAT_2 = 3.724425044


@pytest.fixture(scope="module")
def cont():
    return ContinuationConfig(FinderConfig(grid_size=256))


class TestContinueFamily:
    def test_branch_is_smooth(self, cont, fast_finder):
        p = Params(0.1, 2, 6.0)
        seed = find_roots(p, fast_finder)[0]
        br = continue_family(p, 5.5, seed.theta0_star, cont, m_index=0)
        assert br.terminated is None and br.label == "gamma"
        assert br.energies[0] == pytest.approx(5.5) and br.energies[-1] == pytest.approx(6.0)
        assert np.all(np.diff(br.energies) > 0)
        assert np.abs(np.diff(br.thetas)).max() < 0.01
        for q in br.points:
            assert q.momentum_residual <= 1e-10 and q.collision_residual <= 1e-6

    def test_endpoints_match_finder(self, cont, fast_finder):
        p = Params(0.1, 2, 6.0)
        br = continue_family(p, 5.5, find_roots(p, fast_finder)[1].theta0_star, cont, m_index=1)
        roots = [r.theta0_star for r in find_roots(p.with_C(5.5), fast_finder)]
        assert circ_dist(br.thetas[0], roots).min() < 1e-9

    def test_upward(self, cont, fast_finder):
        p = Params(0.1, 1, 5.0)
        br = continue_family(p, 5.2, find_roots(p, fast_finder)[2].theta0_star, cont, m_index=2)
        assert br.energies[-1] == pytest.approx(5.2) and br.terminated is None

    def test_four_families(self, cont):
        brs = continue_families(Params(0.1, 1, 5.0), 4.9, cont)
        assert [b.m_index for b in brs] == [0, 1, 2, 3]
        assert all(b.terminated is None for b in brs)


class TestBifurcations:
    def test_narrow_window(self, cont):
        res = detect_bifurcations(0.1, 2, (3.70, 3.75), cont)
        assert res.C_hat == pytest.approx(C_HAT_2, abs=1e-6)
        (ev,) = res.events
        assert ev.kind == "pitchfork_from_branch" and ev.delta == 2
        assert ev.width <= 1e-8
        assert ev.K_bif == pytest.approx(Params(0.1, 2, ev.C_bif).K)

    def test_counts_across_event(self, fast_finder):
        assert len(find_roots(Params(0.1, 2, C_HAT_2 + 1e-4), fast_finder)) == 4
        assert len(find_roots(Params(0.1, 2, C_HAT_2 - 1e-4), fast_finder)) == 6

    def test_no_event(self, cont):
        res = detect_bifurcations_params(Params(0.1, 1, 6.0), 5.8, cont)
        assert res.hat is None and res.events == ()
        assert res.sweep[0] == (6.0, 4)

    def test_below_cl1_warns(self, cont):
        with pytest.warns(RuntimeWarning, match="C_L1"):
            detect_bifurcations(0.1, 1, (cl1(0.1) - 0.02, cl1(0.1) + 0.02), cont)

    def test_default_range_does_not_warn(self, cont):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            detect_bifurcations_params(Params(0.1, 1, cl1(0.1) + 0.02), cl1(0.1), cont)

    def test_hat_curve(self, cont):
        ((mu, C, K, L),) = c_hat_curve([0.1], 2, cont, C_max=3.75)
        assert mu == 0.1 and C == pytest.approx(C_HAT_2, abs=1e-6)
        assert L == pytest.approx(K / 2 ** (2 / 3))


class TestDiagram:
    def test_shape_and_sign_changes(self):
        d = diagram(0.1, 1, 128, [5.0, 6.0, 5.5])
        assert isinstance(d, Diagram)
        assert d.M.shape == (3, 128) and list(d.energy) == [5.0, 5.5, 6.0]
        assert np.all(d.status == 0)
        assert [d.sign_changes(i) for i in range(3)] == [4, 4, 4]
        assert d.metadata["energy"] == "C" and d.metadata["theta_size"] == 128

    def test_explicit_grid_matches_parallel(self):
        th = np.linspace(0, math.pi, 16, endpoint=False)
        a = diagram(0.1, 2, th, [4.0, 4.5], FinderConfig(jobs=1))
        b = diagram(0.1, 2, th, [4.0, 4.5], FinderConfig(jobs=3))
        assert np.array_equal(a.M, b.M)
