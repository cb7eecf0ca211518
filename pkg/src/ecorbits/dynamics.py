"""Restricted three-body dynamics in synodic, Levi-Civita and scaled coordinates.

Conventions: the primary of mass ``1 - mu`` sits at ``(mu, 0)`` and the one
of mass ``mu`` at ``(mu - 1, 0)``. Levi-Civita coordinates are centred on the
first primary::

    x = mu + u**2 - v**2,   y = 2*u*v,   dt/ds = 4*(u**2 + v**2)

The scaled system uses ``u = a*U``, ``tau = b*s`` with
``a = sqrt(2*(1-mu)/(C-3*mu))`` and ``b = 2*sqrt(C-3*mu)``, so that ejection
states become ``(0, 0, cos(theta0), sin(theta0))`` and the leading dynamics is
a unit harmonic oscillator. The energy is also written as
``C = 3*mu + K*(1-mu)**(2/3)`` and ``K = L*n**(2/3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _fields
from ._fields import System

__all__ = [
    "DomainError",
    "NumericError",
    "Params",
    "SynodicState",
    "LCState",
    "NormalizedState",
    "EjectionAngle",
    "omega",
    "jacobi_synodic",
    "synodic_rhs",
    "lc_rhs",
    "jacobi_residual_lc",
    "ejection_initial_lc",
    "ejection_initial_normalized",
    "normalized_rhs",
    "normalized_residual",
    "normalized_to_lc",
    "lc_to_normalized",
    "lc_to_synodic",
    "reflect_normalized",
    "in_hill_region",
    "xl1",
    "cl1",
    "normalized_system",
    "normalized_system_K",
    "lc_system",
    "synodic_system",
    "System",
]


class DomainError(ValueError):
    """Input outside the domain where a formula is defined."""


class NumericError(ArithmeticError):
    """An iterative method failed to converge."""


def _c_from_k(mu, K):
    return 3.0 * mu + K * (1.0 - mu) ** (2.0 / 3.0)


def _k_from_c(mu, C):
    return (C - 3.0 * mu) / (1.0 - mu) ** (2.0 / 3.0)


@dataclass(frozen=True)
class Params:
    """Mass parameter, target number of maxima and Jacobi constant.

    ``C`` is stored; ``K``, ``L``, ``eps`` and ``xi`` are derived views.
    """

    mu: float
    n: int
    C: float

    def __post_init__(self):
        if not (0.0 <= self.mu < 1.0):
            raise DomainError("mu must lie in [0, 1); use the hill module for mu = 1")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("n must be a positive integer")
        if not math.isfinite(self.C) or self.C <= 3.0 * self.mu:
            raise DomainError("need C > 3*mu for the scaled system")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "C", float(self.C))

    @classmethod
    def from_K(cls, mu, n, K):
        return cls(mu, n, _c_from_k(mu, K))

    @classmethod
    def from_L(cls, mu, n, L):
        return cls.from_K(mu, n, L * n ** (2.0 / 3.0))

    @property
    def K(self):
        return _k_from_c(self.mu, self.C)

    @property
    def L(self):
        return self.K / self.n ** (2.0 / 3.0)

    @property
    def eps(self):
        return 1.0 / math.sqrt(self.K)

    @property
    def xi(self):
        return 1.0 / math.sqrt(self.L)

    @property
    def sigma(self):
        return (1.0 - self.mu) ** (1.0 / 3.0)

    energy_name = "C"

    @property
    def energy(self):
        """Continuation parameter (``C``)."""
        return self.C

    def with_C(self, C):
        return Params(self.mu, self.n, C)

    def with_energy(self, value):
        return self.with_C(value)

    def system(self):
        """Scaled vector field for these parameters."""
        return normalized_system(self.mu, self.C)


@dataclass(frozen=True)
class SynodicState:
    """Rotating-frame position and velocity. ``vx``/``vy`` are ``nan`` at collision."""

    x: float
    y: float
    vx: float
    vy: float

    @property
    def has_velocity(self):
        return math.isfinite(self.vx) and math.isfinite(self.vy)

    def as_array(self):
        return np.array([self.x, self.y, self.vx, self.vy])


@dataclass(frozen=True)
class LCState:
    """Levi-Civita position and derivatives with respect to ``s``."""

    u: float
    v: float
    up: float
    vp: float

    def as_array(self):
        return np.array([self.u, self.v, self.up, self.vp])


@dataclass(frozen=True)
class NormalizedState:
    """Scaled position and derivatives with respect to ``tau``."""

    U: float
    V: float
    Ud: float
    Vd: float

    def as_array(self):
        return np.array([self.U, self.V, self.Ud, self.Vd])


@dataclass(frozen=True)
class EjectionAngle:
    """Ejection direction in the Levi-Civita plane, reduced to ``[0, pi)``."""

    theta0: float

    def __post_init__(self):
        if not (0.0 <= self.theta0 < math.pi):
            raise DomainError("theta0 must lie in [0, pi)")

    @classmethod
    def wrap(cls, theta):
        t = math.fmod(theta, math.pi)
        if t < 0.0:
            t += math.pi
        if t >= math.pi:
            t = 0.0
        return cls(t)


def _vec(state):
    if hasattr(state, "as_array"):
        return state.as_array()
    arr = np.asarray(state, dtype=np.float64).reshape(-1)
    if arr.shape != (4,):
        raise DomainError("states have exactly four components")
    return arr


def _distances(x, y, mu):
    r1 = math.hypot(x - mu, y)
    r2 = math.hypot(x - mu + 1.0, y)
    if r1 == 0.0 or r2 == 0.0:
        raise DomainError("position coincides with a primary")
    return r1, r2


def omega(x, y, mu):
    """Effective potential ``(x^2+y^2)/2 + (1-mu)/r1 + mu/r2 + mu(1-mu)/2``."""
    r1, r2 = _distances(x, y, mu)
    return 0.5 * (x * x + y * y) + (1.0 - mu) / r1 + mu / r2 + 0.5 * mu * (1.0 - mu)


def jacobi_synodic(state, mu):
    """Jacobi constant ``2*Omega - vx^2 - vy^2``."""
    x, y, vx, vy = _vec(state)
    return 2.0 * omega(x, y, mu) - vx * vx - vy * vy


def synodic_rhs(state, mu):
    """Rotating-frame equations of motion."""
    x, y, vx, vy = _vec(state)
    _distances(x, y, mu)
    return np.array(_fields.synodic_field(x, y, vx, vy, np.array([mu, 0.0])))


def _check_r2_lc(u, v):
    if (1.0 + u * u - v * v) ** 2 + 4.0 * u * u * v * v == 0.0:
        raise DomainError("collision with the second primary")


def lc_rhs(state, mu, C):
    """Regularized equations in ``(u, v)`` with Jacobi constant ``C``.

    Returns ``(u', v', u'', v'')``; regular at ``u = v = 0``.
    """
    u, v, up, vp = _vec(state)
    _check_r2_lc(u, v)
    return np.array(_fields.lc_field(u, v, up, vp, np.array([mu, C])))


def jacobi_residual_lc(state, mu, C):
    """``u'^2 + v'^2 - 8*(u^2+v^2)*calU``; zero on trajectories of :func:`lc_rhs`."""
    y = _vec(state)
    _check_r2_lc(y[0], y[1])
    return float(_fields.lc_integral(y, np.array([mu, C])))


def ejection_initial_lc(theta0, mu):
    """Levi-Civita ejection state with speed ``2*sqrt(2*(1-mu))``."""
    if mu >= 1.0 or mu < 0.0:
        raise DomainError("ejection states need 0 <= mu < 1")
    sp = 2.0 * math.sqrt(2.0 * (1.0 - mu))
    return LCState(0.0, 0.0, sp * math.cos(theta0), sp * math.sin(theta0))


def ejection_initial_normalized(theta0):
    """Scaled ejection state ``(0, 0, cos(theta0), sin(theta0))``."""
    return NormalizedState(0.0, 0.0, math.cos(theta0), math.sin(theta0))


def _scaled_params(mu, C):
    if not (0.0 <= mu < 1.0):
        raise DomainError("mu must lie in [0, 1)")
    if C <= 3.0 * mu:
        raise DomainError("the scaling needs C > 3*mu")
    return _fields.normalized_params(mu, _k_from_c(mu, C))


def normalized_rhs(state, mu, C):
    """Scaled equations ``(U', V', U'', V'')`` with respect to ``tau``."""
    U, V, Ud, Vd = _vec(state)
    return np.array(_fields.normalized_field(U, V, Ud, Vd, _scaled_params(mu, C)))


def normalized_residual(state, mu, C):
    """Scaled first integral; zero on trajectories and equal to ``|v|^2 - 1`` at the origin."""
    return float(_fields.normalized_integral(_vec(state), _scaled_params(mu, C)))


def _scales(mu, C):
    if C <= 3.0 * mu:
        raise DomainError("the scaling needs C > 3*mu")
    if not (0.0 <= mu < 1.0):
        raise DomainError("mu must lie in [0, 1)")
    a = math.sqrt(2.0 * (1.0 - mu) / (C - 3.0 * mu))
    b = 2.0 * math.sqrt(C - 3.0 * mu)
    return a, b


def normalized_to_lc(state, tau, mu, C):
    """Map a scaled state at time ``tau`` to ``(LCState, s)``."""
    a, b = _scales(mu, C)
    U, V, Ud, Vd = _vec(state)
    return LCState(a * U, a * V, a * b * Ud, a * b * Vd), tau / b


def lc_to_normalized(state, s, mu, C):
    """Inverse of :func:`normalized_to_lc`: returns ``(NormalizedState, tau)``."""
    a, b = _scales(mu, C)
    u, v, up, vp = _vec(state)
    return NormalizedState(u / a, v / a, up / (a * b), vp / (a * b)), s * b


def lc_to_synodic(state, mu):
    """Map to rotating coordinates. At ``u = v = 0`` the velocity is ``nan``."""
    u, v, up, vp = _vec(state)
    x = mu + u * u - v * v
    y = 2.0 * u * v
    rho = u * u + v * v
    if rho == 0.0:
        return SynodicState(x, y, math.nan, math.nan)
    vx = (u * up - v * vp) / (2.0 * rho)
    vy = (up * v + u * vp) / (2.0 * rho)
    return SynodicState(x, y, vx, vy)


def reflect_normalized(state):
    """Image under the time-reversing symmetry ``(U, V, U', V') -> (-U, V, U', -V')``."""
    U, V, Ud, Vd = _vec(state)
    return NormalizedState(-U, V, Ud, -Vd)


def in_hill_region(x, y, mu, C):
    """Whether ``2*Omega(x, y) >= C`` (debugging aid only)."""
    return 2.0 * omega(x, y, mu) >= C


def _omega_x(x, mu):
    # on the segment between the primaries
    return x + (1.0 - mu) / (mu - x) ** 2 - mu / (x - mu + 1.0) ** 2


def _omega_xx(x, mu):
    return 1.0 + 2.0 * (1.0 - mu) / (mu - x) ** 3 + 2.0 * mu / (x - mu + 1.0) ** 3


def xl1(mu, tol=1e-13, max_iter=100):
    """Abscissa of the collinear equilibrium between the primaries.

    Safeguarded Newton iteration on ``Omega_x = 0`` over ``(mu-1, mu)``.
    """
    if not (0.0 < mu < 1.0):
        raise DomainError("need 0 < mu < 1")
    lo, hi = mu - 1.0, mu
    # Hill-type initial guess near the smaller primary
    if mu < 0.5:
        x = mu - 1.0 + (mu / 3.0) ** (1.0 / 3.0)
    else:
        x = mu - ((1.0 - mu) / 3.0) ** (1.0 / 3.0)
    if not (lo < x < hi):
        x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f = _omega_x(x, mu)
        if f > 0.0:
            hi = x
        else:
            lo = x
        xn = x - f / _omega_xx(x, mu)
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tol or hi - lo <= tol:
            return xn
        x = xn
    raise NumericError("L1 iteration did not converge")


def cl1(mu):
    """Jacobi constant of the collinear equilibrium between the primaries."""
    return 2.0 * omega(xl1(mu), 0.0, mu)


def normalized_system(mu, C):
    """Compiled scaled vector field for ``0 <= mu < 1``."""
    return System(_fields.NORMALIZED, tuple(_scaled_params(mu, C)))


def normalized_system_K(mu, K):
    """Scaled vector field from ``K``; ``mu = 1`` gives the scaled Hill system."""
    if not (0.0 <= mu <= 1.0) or K <= 0.0:
        raise DomainError("need 0 <= mu <= 1 and K > 0")
    return System(_fields.NORMALIZED, tuple(_fields.normalized_params(mu, K)))


def lc_system(mu, C):
    """Compiled Levi-Civita vector field."""
    return System(_fields.LEVI_CIVITA, (float(mu), float(C)))


def synodic_system(mu, C=0.0):
    """Compiled rotating-frame vector field; ``C`` only shifts the tracked integral."""
    return System(_fields.SYNODIC, (float(mu), float(C)))
