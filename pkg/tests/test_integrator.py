import math

import numpy as np
import pytest

from ecorbits._tableau import A, B, BHAT, C, E
from ecorbits.dynamics import normalized_system
from ecorbits.integrator import (EscapeError, IntegratorConfig, PropagationError, StepSizeError,
                                 angular_momentum, propagate, propagate_to_nth_min, step)


def oscillator(t, y):
    return np.array([y[2], y[3], -y[0], -y[1]])


class TestTableau:
    def test_row_sums(self):
        np.testing.assert_allclose(A.sum(axis=1), C, atol=1e-15)

    @pytest.mark.parametrize("k", range(8))
    def test_quadrature_order_8(self, k):
        assert B @ C**k == pytest.approx(1.0 / (k + 1), abs=1e-14)

    @pytest.mark.parametrize("k", range(7))
    def test_quadrature_order_7(self, k):
        assert BHAT @ C**k == pytest.approx(1.0 / (k + 1), abs=1e-14)

    def test_error_weights(self):
        assert E.sum() == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(E, B - BHAT)

    def test_explicit(self):
        assert np.all(np.triu(A) == 0.0)


class TestConfig:
    def test_defaults(self):
        c = IntegratorConfig()
        assert (c.abs_tol, c.rel_tol) == (1e-12, 1e-12)

    @pytest.mark.parametrize("kw", [dict(abs_tol=0.0), dict(h_min=1.0, h_init=0.1),
                                    dict(max_steps=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            IntegratorConfig(**kw)

    def test_tightened(self):
        c = IntegratorConfig().tightened(1e-14)
        assert (c.abs_tol, c.rel_tol) == (1e-14, 1e-14)


class TestPropagate:
    def test_oscillator_accuracy(self):
        y0 = np.array([1.0, 0.0, 0.0, 0.5])
        y, s = propagate(oscillator, y0, 0.0, 10.0)
        expect = [math.cos(10), 0.5 * math.sin(10), -math.sin(10), 0.5 * math.cos(10)]
        np.testing.assert_allclose(y, expect, atol=1e-11)
        assert s.tau_final == 10.0

    def test_backward(self):
        y0 = np.array([1.0, 0.0, 0.0, 1.0])
        y, _ = propagate(oscillator, y0, 0.0, -3.0)
        np.testing.assert_allclose(y, [math.cos(3), -math.sin(3), math.sin(3), math.cos(3)], atol=1e-12)

    def test_error_scales_with_tolerance(self):
        y0 = np.array([1.0, 0.0, 0.0, 1.0])
        errs = []
        for tol in (1e-8, 1e-11):
            y, _ = propagate(oscillator, y0, 0.0, 20.0, IntegratorConfig(abs_tol=tol, rel_tol=tol))
            errs.append(abs(y[0] - math.cos(20.0)))
        assert errs[1] < errs[0]
        assert errs[1] < 1e-9

    def test_single_step(self):
        y, t, hn, err = step(oscillator, [1.0, 0.0, 0.0, 1.0], 0.0, 0.1)
        assert t == pytest.approx(0.1)
        assert y[0] == pytest.approx(math.cos(0.1), abs=1e-13)
        assert 0.0 <= err <= 1.0
        assert hn > 0

    def test_step_bounds(self):
        with pytest.raises(ValueError):
            step(oscillator, [1, 0, 0, 1], 0.0, 10.0)

    def test_max_steps(self):
        with pytest.raises(PropagationError) as info:
            propagate(oscillator, [1, 0, 0, 1], 0.0, 100.0, IntegratorConfig(max_steps=5))
        assert info.value.state is not None

    def test_step_underflow(self):
        def blowup(t, y):
            return np.array([y[0] ** 2 * 1e3, 0.0, 0.0, 0.0])

        cfg = IntegratorConfig(h_min=1e-4, h_init=1e-3)
        with pytest.raises(StepSizeError):
            propagate(blowup, [1.0, 0, 0, 0], 0.0, 1.0, cfg)

    def test_integral_tracking(self):
        def energy(y):
            return 0.5 * (y[0] ** 2 + y[1] ** 2 + y[2] ** 2 + y[3] ** 2) - 0.5

        _, s = propagate(oscillator, [1.0, 0, 0, 0], 0.0, 10.0, integral=energy)
        assert s.max_integral_residual < 1e-12


class TestEvents:
    def test_oscillator_minima(self):
        # radius |sin tau| from the origin: minima at k*pi, maxima at (k+1/2)*pi
        y0 = [0.0, 0.0, math.cos(0.3), math.sin(0.3)]
        for n in (1, 2, 3):
            ev, s = propagate_to_nth_min(oscillator, y0, n, refine_all=True)
            assert ev.tau == pytest.approx(n * math.pi, abs=1e-12)
            assert s.n_maxima == n
            kinds = [e.kind for e in s.events]
            assert kinds == ["radial_max", "radial_min"] * n
            for e in s.events:
                assert abs(e.g) <= 1e-12 * (1 + sum(v * v for v in e.state))

    def test_alternation_rtbp(self):
        sys_ = normalized_system(0.1, 5.0)
        ev, s = propagate_to_nth_min(sys_, [0, 0, math.cos(1.0), math.sin(1.0)], 3,
                                     refine_all=True)
        kinds = [e.kind for e in s.events]
        assert kinds == ["radial_max", "radial_min"] * 3
        assert s.max_integral_residual <= 1e-10
        assert abs(ev.g) <= 1e-12 * (1 + sum(v * v for v in ev.state))

    def test_reversibility(self):
        sys_ = normalized_system(0.1, 4.5)
        y0 = np.array([0, 0, math.cos(0.8), math.sin(0.8)])
        ev, _ = propagate_to_nth_min(sys_, y0, 2)
        back, _ = propagate(sys_, ev.state, ev.tau, 0.0)
        np.testing.assert_allclose(back, y0, atol=1e-8)

    def test_determinism(self):
        sys_ = normalized_system(0.1, 5.0)
        y0 = [0, 0, math.cos(0.2), math.sin(0.2)]
        a, sa = propagate_to_nth_min(sys_, y0, 2)
        b, sb = propagate_to_nth_min(sys_, y0, 2)
        assert a == b and sa == sb

    def test_compiled_matches_callable(self):
        sys_ = normalized_system(0.1, 5.0)
        y0 = [0, 0, math.cos(0.2), math.sin(0.2)]
        a, _ = propagate_to_nth_min(sys_, y0, 1)
        b, _ = propagate_to_nth_min(sys_.rhs, y0, 1)
        assert a.tau == pytest.approx(b.tau, abs=1e-12)
        np.testing.assert_allclose(a.state, b.state, atol=1e-12)

    def test_escape(self):
        cfg = IntegratorConfig(tau_max=1.0)
        with pytest.raises(EscapeError):
            propagate_to_nth_min(oscillator, [0, 0, 1.0, 0.0], 2, cfg)

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            propagate_to_nth_min(oscillator, [0, 0, 1.0, 0.0], 0)


@pytest.mark.parametrize("state, M", [((0, 0, 3, 4), 0.0), ((1, 0, 0, 2.5), 2.5),
                                      ((math.cos(0.4), math.sin(0.4), -math.sin(0.4), math.cos(0.4)), 1.0)])
def test_angular_momentum(state, M):
    assert angular_momentum(state) == pytest.approx(M, abs=1e-15)
