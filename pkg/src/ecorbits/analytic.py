"""Closed-form expansions of the scaled ejection orbits.

``U = sum_j U_j(tau, theta0) eps^j`` solves the scaled system order by order
with ``U_0 = (cos(theta0) sin(tau), sin(theta0) sin(tau))``; the nonzero
orders up to ten are ``j = 0, 3, 6, 8, 9, 10``. From it follow the time of the
n-th minimum ``tau*`` and the angular momentum ``M(n, theta0)`` there. For
``mu = 0`` the ejection orbits are rotating Kepler ellipses with an explicit
fundamental matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp
from scipy.optimize import brentq

from .dynamics import DomainError, NormalizedState

__all__ = [
    "SeriesCoeffs",
    "SUPPORTED_ORDERS",
    "u_series",
    "series_state",
    "tau_star_series",
    "momentum_series",
    "momentum_series_terms",
    "RootPrediction",
    "predicted_roots",
    "kepler_lc_ejection",
    "kepler_time",
    "fundamental_matrix_kepler",
    "hill_scaling_curves",
]

SUPPORTED_ORDERS = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
_ZERO_ORDERS = (1, 2, 4, 5, 7)

_t, _th, _mu = sp.symbols("tau theta0 mu", real=True)


def _terms():
    """Symbolic ``(U_j, V_j)`` for the nonzero orders."""
    t, th, mu = _t, _th, _mu
    c, s = sp.cos(t), sp.sin(t)
    ct, st = sp.cos(th), sp.sin(th)
    s13 = (1 - mu) ** sp.Rational(1, 3)
    W = t - c * s
    out = {0: (ct * s, st * s)}
    P3 = t * s - c * s ** 2
    out[3] = (P3 * st, -P3 * ct)
    B6 = 15 * t * c - (8 + 9 * c ** 2 - 2 * c ** 4) * s
    out[6] = (-(W ** 2 * s - mu * B6 * (1 - 2 * ct ** 4)) / 2 * ct,
              -(W ** 2 * s - mu * B6 * (1 - 2 * st ** 4)) / 2 * st)
    B8 = 105 * t * c - (48 + 87 * c ** 2 - 38 * c ** 4 + 8 * c ** 6) * s
    out[8] = (mu * s13 / 6 * B8 * (5 * ct ** 6 - 6 * ct ** 2 + 2) * ct,
              -mu * s13 / 6 * B8 * (5 * st ** 6 - 6 * st ** 2 + 2) * st)

    def inner9(q):
        return (4 * W ** 3 * s - mu * (
            3 * t * (23 + 144 * c ** 2 + 8 * c ** 4) * s
            - (379 - 217 * c ** 2 - 178 * c ** 4 + 16 * c ** 6) * c
            - 480 * t * (1 + 6 * c ** 2) * s * q ** 2
            + 32 * (81 - 53 * c ** 2 - 32 * c ** 4 + 4 * c ** 6) * c * q ** 2
            - 360 * t ** 2 * c * q ** 4
            + 240 * t * (3 + 15 * c ** 2 - c ** 4) * s * q ** 4
            - 8 * (374 - 257 * c ** 2 - 143 * c ** 4 + 26 * c ** 6) * c * q ** 4))

    out[9] = (-inner9(ct) * st / 24, inner9(st) * ct / 24)
    B10 = 315 * t * c - (128 + 325 * c ** 2 - 210 * c ** 4 + 88 * c ** 6 - 16 * c ** 8) * s
    out[10] = (mu * s13 ** 2 / 8 * B10 * (3 - 20 * ct ** 2 + 30 * ct ** 4 - 14 * ct ** 8) * ct,
               mu * s13 ** 2 / 8 * B10 * (3 - 20 * st ** 2 + 30 * st ** 4 - 14 * st ** 8) * st)
    return out


@lru_cache(maxsize=None)
def _compiled(j):
    U, V = _terms()[j]
    exprs = [U, V, sp.diff(U, _t), sp.diff(V, _t)]
    return sp.lambdify((_t, _th, _mu), exprs, "numpy")


def u_series(j, tau, theta0, mu):
    """Order-``j`` term ``(U_j, V_j, U_j', V_j')`` of the ejection orbit.

    Parameters
    ----------
    j : int
        Order in ``eps``; orders 1, 2, 4, 5 and 7 vanish identically.
    tau, theta0 : float or ndarray
    mu : float

    Raises
    ------
    DomainError
        For ``j`` outside ``0..10``.
    """
    if j not in SUPPORTED_ORDERS:
        raise DomainError(f"series order {j!r} is not available (0..10)")
    tau = np.asarray(tau, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    if j in _ZERO_ORDERS:
        z = np.zeros(np.broadcast(tau, theta0).shape)
        return (z, z.copy(), z.copy(), z.copy())
    vals = _compiled(j)(tau, theta0, float(mu))
    shape = np.broadcast(tau, theta0).shape
    return tuple(np.broadcast_to(np.asarray(v, dtype=float), shape).copy()
                 if np.ndim(v) or shape else np.float64(v) for v in vals)


def series_state(tau, theta0, eps, mu, order=10):
    """Truncated series ``sum_{j<=order} U_j eps^j`` as a 4-vector."""
    if not 0 <= order <= 10:
        raise DomainError("order must lie in 0..10")
    acc = np.zeros(4)
    for j in range(order + 1):
        if j in _ZERO_ORDERS:
            continue
        acc = acc + np.array(u_series(j, tau, theta0, mu), dtype=float) * eps ** j
    return acc


@dataclass(frozen=True)
class SeriesCoeffs:
    """Truncation order and mass parameter of the ejection-orbit series.

    ``theta0`` and ``eps`` are bound at evaluation; at ``eps = 0`` the
    harmonic oscillator is returned.
    """

    order: int = 10
    mu: float = 0.0

    def __post_init__(self):
        if not 0 <= self.order <= 10:
            raise DomainError("order must lie in 0..10")

    def state(self, tau, theta0, eps):
        return series_state(tau, theta0, eps, self.mu, self.order)

    def tau_star(self, n, theta0, eps):
        return tau_star_series(n, theta0, eps, self.mu, self.order)

    def momentum(self, n, theta0, eps):
        return momentum_series(n, theta0, eps, self.mu, max(self.order, 6))


def tau_star_series(n, theta0, eps, mu, order=10):
    """Time of the n-th minimum, ``n*pi + sum_j tau_j* eps^j`` up to ``order``."""
    if not 0 <= order <= 10:
        raise DomainError("order must lie in 0..10")
    s13 = (1.0 - mu) ** (1.0 / 3.0)
    pi = math.pi
    th = np.asarray(theta0, dtype=float)
    tau = n * pi + 0.0 * th
    if order >= 6:
        tau = tau + 15.0 * mu * n * pi * (1.0 + 3.0 * np.cos(4 * th)) / 8.0 * eps ** 6
    if order >= 8:
        c2 = np.cos(2 * th)
        tau = tau - 35.0 * mu * s13 * n * pi * c2 * (5.0 * c2 ** 2 - 3.0) / 4.0 * eps ** 8
    if order >= 9:
        tau = tau + 15.0 * mu * n ** 2 * pi ** 2 * np.sin(4 * th) / 2.0 * eps ** 9
    if order >= 10:
        c4 = np.cos(4 * th)
        tau = tau + (315.0 * mu * s13 ** 2 * n * pi * (13.0 - 10.0 * c4 - 35.0 * c4 ** 2)
                     / 256.0 * eps ** 10)
    return tau


def momentum_series_terms(n, theta0, mu):
    """Coefficients of ``eps^6, eps^8, eps^9, eps^10`` in ``M(n, theta0)``."""
    th = np.asarray(theta0, dtype=float)
    s13 = (1.0 - mu) ** (1.0 / 3.0)
    pi = math.pi
    return {
        6: -15.0 * mu * n * pi * np.sin(4 * th) / 4.0,
        8: 105.0 * mu * s13 * n * pi * (np.sin(2 * th) + 5.0 * np.sin(6 * th)) / 64.0,
        9: 15.0 * mu * n ** 2 * pi ** 2 * np.cos(4 * th) / 2.0,
        10: -315.0 * mu * s13 ** 2 * n * pi * (2.0 * np.sin(4 * th) + 7.0 * np.sin(8 * th)) / 128.0,
    }


def momentum_series(n, theta0, eps, mu, order=10):
    """Angular momentum at the n-th minimum truncated after ``eps^order``.

    ``order`` lies in 6..10 (order 7 equals order 6).
    """
    if not 6 <= order <= 10:
        raise DomainError("momentum series order must lie in 6..10")
    terms = momentum_series_terms(n, theta0, mu)
    return sum(v * eps ** k for k, v in terms.items() if k <= order)


@dataclass(frozen=True)
class RootPrediction:
    """Zeros of the truncated momentum series over ``[0, pi)``.

    ``degenerate`` is set for ``mu = 0``, where every angle is a root.
    """

    roots: tuple
    seeds_unresolved: tuple = ()
    degenerate: bool = False


def predicted_roots(n, eps, mu, order=10, grid=2048):
    """Roots of :func:`momentum_series` near ``m*pi/4``, plus any extra ones.

    Newton's method runs from the seeds ``m*pi/4``; for ``order >= 8`` a sign
    scan over ``grid`` points adds roots not reached from a seed. Seeds that
    converge to an already found root contribute nothing.
    """
    if mu == 0.0:
        return RootPrediction((), (), True)

    def f(t):
        return float(momentum_series(n, t, eps, mu, order))

    def df(t, h=1e-7):
        return (f(t + h) - f(t - h)) / (2 * h)

    roots, bad = [], []
    for m in range(4):
        t = m * math.pi / 4.0
        ok = False
        for _ in range(60):
            d = df(t)
            if d == 0.0 or not math.isfinite(d):
                break
            step = f(t) / d
            t -= step
            if abs(step) < 1e-15:
                ok = True
                break
        if ok or abs(f(t)) < 1e-14 * max(1.0, abs(df(t))):
            r = t % math.pi
            if all(min(abs(r - q), math.pi - abs(r - q)) > 1e-9 for q in roots):
                roots.append(r)
        else:
            bad.append(m * math.pi / 4.0)
    if order >= 8:
        th = np.arange(grid) * (math.pi / grid)
        vals = np.asarray(momentum_series(n, th, eps, mu, order))
        nxt = np.roll(vals, -1)
        for i in np.nonzero((vals > 0) != (nxt > 0))[0]:
            a, b = th[i], th[i] + math.pi / grid
            r = brentq(f, a, b, xtol=1e-15) % math.pi
            if all(min(abs(r - q), math.pi - abs(r - q)) > 1e-9 for q in roots):
                roots.append(r)
    return RootPrediction(tuple(sorted(roots)), tuple(bad), False)


# ---------------------------------------------------------------------------
# rotating Kepler problem (mu = 0)


def kepler_time(n, xi, T):
    """Synodic time ``t = 2 (T - cos(nT) sin(nT) / n) xi^3`` along an ejection orbit."""
    return 2.0 * (T - math.cos(n * T) * math.sin(n * T) / n) * xi ** 3


def kepler_lc_ejection(n, theta0, xi, T):
    """Ejection solution of the ``mu = 0`` system in the time ``T = tau / n``.

    The system is ``U'' = -n^2 U + 8 rho V' xi^3 + 12 rho^2 U xi^6`` (and
    symmetrically for ``V``) with ejection state ``(0, 0, n cos, n sin)``.

    Returns
    -------
    state : NormalizedState
        Position and derivatives with respect to ``T``.
    t : float
        Synodic time.
    """
    if xi < 0.0:
        raise DomainError("xi must be nonnegative")
    s, c = math.sin(n * T), math.cos(n * T)
    t = kepler_time(n, xi, T)
    dt = 4.0 * s * s * xi ** 3
    phi = theta0 - 0.5 * t
    U = math.cos(phi) * s
    V = math.sin(phi) * s
    Ud = n * math.cos(phi) * c + 0.5 * dt * math.sin(phi) * s
    Vd = n * math.sin(phi) * c - 0.5 * dt * math.cos(phi) * s
    return NormalizedState(U, V, Ud, Vd), t


def fundamental_matrix_kepler(n, theta0, xi, T):
    """Fundamental matrix ``X = R A`` of the linearized ``mu = 0`` flow along an ejection orbit.

    ``R`` rotates positions and velocities by ``-t/2``; ``X(0)`` is the identity.
    """
    th = theta0
    S, Cn = math.sin(n * T), math.cos(n * T)
    s2 = math.sin(2 * th)
    st2, ct2 = math.sin(th) ** 2, math.cos(th) ** 2
    x3, x6, x9 = xi ** 3, xi ** 6, xi ** 9
    P = T - Cn * S / n                                  # T - cos sin / n
    Q = T * (1.0 + 2.0 * Cn ** 2) - 3.0 * Cn * S / n    # T (1 + 2 cos^2) - 3 cos sin / n
    G = 8.0 - 13.0 * Cn ** 2 + 2.0 * Cn ** 4
    A = np.empty((4, 4))
    A[0, 0] = (Cn - s2 * (T * Cn - S * (1.0 + S * S) / n) * x3
               + 2.0 * st2 / n * Q * S * x6)
    A[0, 1] = (2.0 * (ct2 * T * Cn - S * (ct2 - st2 * S * S) / n) * x3
               - s2 / n * Q * S * x6)
    A[0, 2] = S / n + s2 / n * P * S * x3
    A[0, 3] = 2.0 * st2 / n * P * S * x3
    A[1, 0] = (-2.0 * (st2 * T * Cn - S * (st2 - ct2 * S * S) / n) * x3
               - s2 / n * Q * S * x6)
    A[1, 1] = (Cn + s2 * (T * Cn - S * (1.0 + S * S) / n) * x3
               + 2.0 * ct2 / n * Q * S * x6)
    A[1, 2] = -2.0 * ct2 / n * P * S * x3
    A[1, 3] = S / n - s2 / n * P * S * x3
    A[2, 0] = (-n * S + s2 * S * (n * T + 3.0 * Cn * S) * x3
               + 2.0 * (-st2 * T * (5.0 - 8.0 * Cn ** 2) * Cn
                        - S / n * (ct2 * G + 9.0 * Cn ** 2 - 6.0)) * x6
               - 2.0 * s2 / n * Q * S ** 3 * x9)
    A[2, 1] = (-2.0 * (n * ct2 * T - (1.0 + 3.0 * st2) * Cn * S) * S * x3
               + s2 * (T * Cn * (5.0 - 8.0 * Cn ** 2) - G / n * S) * x6
               + 4.0 * ct2 / n * Q * S ** 3 * x9)
    A[2, 2] = (Cn + s2 * (T * Cn + (2.0 - 3.0 * Cn ** 2) / n * S) * x3
               - 4.0 * ct2 / n * P * S ** 3 * x6)
    A[2, 3] = (2.0 * (st2 * P * Cn + (2.0 * st2 + 1.0) / n * S ** 3) * x3
               - 2.0 * s2 / n * P * S ** 3 * x6)
    A[3, 0] = (2.0 * (n * st2 * T - (1.0 + 3.0 * ct2) * Cn * S) * S * x3
               + s2 * (T * Cn * (5.0 - 8.0 * Cn ** 2) - G / n * S) * x6
               - 4.0 * st2 / n * Q * S ** 3 * x9)
    A[3, 1] = (-n * S - s2 * S * (n * T + 3.0 * Cn * S) * x3
               + 2.0 * (-ct2 * T * (5.0 - 8.0 * Cn ** 2) * Cn
                        - S / n * (st2 * G + 9.0 * Cn ** 2 - 6.0)) * x6
               + 2.0 * s2 / n * Q * S ** 3 * x9)
    A[3, 2] = (-2.0 * (ct2 * P * Cn + (2.0 * ct2 + 1.0) / n * S ** 3) * x3
               - 2.0 * s2 / n * P * S ** 3 * x6)
    A[3, 3] = (Cn - s2 * (T * Cn + (2.0 - 3.0 * Cn ** 2) / n * S) * x3
               - 4.0 * st2 / n * P * S ** 3 * x6)
    t = kepler_time(n, xi, T)
    ca, sa = math.cos(-0.5 * t), math.sin(-0.5 * t)
    rot = np.array([[ca, -sa], [sa, ca]])
    R = np.zeros((4, 4))
    R[:2, :2] = rot
    R[2:, 2:] = rot
    return R @ A


def hill_scaling_curves(p, n):
    """``K = (2/p)^(2/3) n^(2/3)``; ``p = 1`` is the reference law of the first bifurcation."""
    if p < 1:
        raise DomainError("p must be at least 1")
    return (2.0 / p) ** (2.0 / 3.0) * n ** (2.0 / 3.0)
