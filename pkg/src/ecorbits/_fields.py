"""Compiled vector fields and first integrals shared by every system.

Every field maps the four scalar components of a state and a flat
parameter array ``p`` to the four components of its derivative. The integer ``kind`` selects
the system inside :func:`system_rhs`, which keeps the propagation kernels
cacheable (numba cannot cache kernels that receive functions as arguments).
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

NORMALIZED = 0
LEVI_CIVITA = 1
HILL_LC = 2
SYNODIC = 3
HILL_SYNODIC = 4

# layout of the parameter array for NORMALIZED
P_MU, P_K, P_SIGMA, P_EPS3, P_EPS6, P_INVK, P_INVK2, P_INVK3 = range(8)


def normalized_params(mu, K):
    """Parameter array of the scaled system for mass ``mu`` and scaled energy ``K``.

    ``mu = 1`` is allowed and yields the scaled Hill system.
    """
    sigma = (1.0 - mu) ** (1.0 / 3.0) if mu < 1.0 else 0.0
    return np.array([
        mu, K, sigma, K ** -1.5, K ** -3.0, 1.0 / K, K ** -2.0, K ** -3.0,
    ])


@njit(cache=True, nogil=True)
def _scaled_terms(U, V, rho, p):
    # returns (B_U, B_V, tail); regular as sigma -> 0
    s = p[P_SIGMA]
    D = U * U - V * V
    ws = 4.0 * D * p[P_INVK] + 4.0 * s * rho * rho * p[P_INVK2]
    R = np.sqrt(1.0 + s * ws)
    opr = 1.0 + R
    q = 1.0 / (R * opr)
    iR = q * opr
    iR3 = iR * iR * iR
    f = q
    fw = -0.5 * (R + 2.0) * q * q * R
    gw = -(R * R + R + 1.0) * iR * iR * q
    a = -D * fw * ws
    b = 0.5 * rho * gw * ws
    tail = 8.0 * rho * rho * (f + iR3) * p[P_INVK3]
    return a - b, a + b, tail


@njit(cache=True, nogil=True)
def normalized_field(U, V, Ud, Vd, p):
    mu = p[P_MU]
    rho = U * U + V * V
    lin = 12.0 * p[P_EPS6] * rho * rho
    cor = 8.0 * p[P_EPS3] * rho
    if mu == 0.0:
        return Ud, Vd, -U + cor * Vd + lin * U, -V - cor * Ud + lin * V
    bu, bv, tail = _scaled_terms(U, V, rho, p)
    c = 8.0 * p[P_INVK2]
    return (Ud, Vd,
            -U + cor * Vd + lin * U + mu * U * (c * bu - tail),
            -V - cor * Ud + lin * V + mu * V * (c * bv - tail))


@njit(cache=True, nogil=True)
def normalized_integral(y, p):
    U, V, Ud, Vd = y[0], y[1], y[2], y[3]
    mu = p[P_MU]
    K = p[P_K]
    s = p[P_SIGMA]
    rho = U * U + V * V
    val = Ud * Ud + Vd * Vd + rho - 4.0 * s ** 3 * rho ** 3 * p[P_INVK3] - 1.0
    if mu != 0.0:
        D = U * U - V * V
        q = D + s * rho * rho / K
        R = np.sqrt(1.0 + 4.0 * s * q / K)
        val -= 16.0 * mu * rho * q * q * p[P_INVK3] * (R + 2.0) / (R * (1.0 + R) ** 2)
    return val


@njit(cache=True, nogil=True)
def lc_field(u, v, up, vp, p):
    mu, C = p[0], p[1]
    rho = u * u + v * v
    r2 = np.sqrt((1.0 + u * u - v * v) ** 2 + 4.0 * u * u * v * v)
    r23 = r2 ** 3
    common = 4.0 * mu + 12.0 * rho * rho + 8.0 * mu / r2 - 4.0 * C
    return (up, vp,
            8.0 * rho * vp + u * (common + 16.0 * mu * u * u)
            - 8.0 * mu * u * rho * (rho + 1.0) / r23,
            -8.0 * rho * up + v * (common - 16.0 * mu * v * v)
            - 8.0 * mu * v * rho * (rho - 1.0) / r23)


@njit(cache=True, nogil=True)
def lc_integral(y, p):
    u, v, up, vp = y[0], y[1], y[2], y[3]
    mu, C = p[0], p[1]
    rho = u * u + v * v
    r2sq = (1.0 + u * u - v * v) ** 2 + 4.0 * u * u * v * v
    r2 = np.sqrt(r2sq)
    # 8*rho*calU with the 1/rho term cleared analytically
    val = 4.0 * rho * ((1.0 - mu) * rho * rho + mu * r2sq) + 8.0 * (1.0 - mu)
    val += 8.0 * rho * (mu / r2 - 0.5 * C)
    return up * up + vp * vp - val


@njit(cache=True, nogil=True)
def hill_lc_field(u, v, up, vp, p):
    K = p[0]
    rho = u * u + v * v
    u2, v2 = u * u, v * v
    return (up, vp,
            8.0 * rho * vp - 4.0 * K * u + 12.0 * (3.0 * u2 * u2 - 2.0 * u2 * v2 - v2 * v2) * u,
            -8.0 * rho * up - 4.0 * K * v + 12.0 * (3.0 * v2 * v2 - 2.0 * u2 * v2 - u2 * u2) * v)


@njit(cache=True, nogil=True)
def hill_lc_integral(y, p):
    u, v, up, vp = y[0], y[1], y[2], y[3]
    K = p[0]
    rho = u * u + v * v
    D = u * u - v * v
    return up * up + vp * vp - (12.0 * rho * D * D + 8.0 - 4.0 * K * rho)


@njit(cache=True, nogil=True)
def synodic_field(x, yy, vx, vy, p):
    mu = p[0]
    r1 = np.sqrt((x - mu) ** 2 + yy * yy)
    r2 = np.sqrt((x - mu + 1.0) ** 2 + yy * yy)
    a = (1.0 - mu) / r1 ** 3
    b = mu / r2 ** 3
    return (vx, vy,
            2.0 * vy + x - a * (x - mu) - b * (x - mu + 1.0),
            -2.0 * vx + yy - a * yy - b * yy)


@njit(cache=True, nogil=True)
def synodic_integral(y, p):
    x, yy, vx, vy = y[0], y[1], y[2], y[3]
    mu, C = p[0], p[1]
    r1 = np.sqrt((x - mu) ** 2 + yy * yy)
    r2 = np.sqrt((x - mu + 1.0) ** 2 + yy * yy)
    om = 0.5 * (x * x + yy * yy) + (1.0 - mu) / r1 + mu / r2 + 0.5 * mu * (1.0 - mu)
    return 2.0 * om - vx * vx - vy * vy - C


@njit(cache=True, nogil=True)
def hill_synodic_field(x, yy, vx, vy, p):
    r3 = (x * x + yy * yy) ** 1.5
    return vx, vy, 2.0 * vy + 3.0 * x - x / r3, -2.0 * vx - yy / r3


@njit(cache=True, nogil=True)
def hill_synodic_integral(y, p):
    x, yy, vx, vy = y[0], y[1], y[2], y[3]
    psi = 1.5 * x * x + 1.0 / np.sqrt(x * x + yy * yy)
    return 2.0 * psi - vx * vx - vy * vy - p[0]


@njit(cache=True, nogil=True)
def system_rhs(kind, t, y0, y1, y2, y3, p):
    if kind == NORMALIZED:
        return normalized_field(y0, y1, y2, y3, p)
    elif kind == LEVI_CIVITA:
        return lc_field(y0, y1, y2, y3, p)
    elif kind == HILL_LC:
        return hill_lc_field(y0, y1, y2, y3, p)
    elif kind == SYNODIC:
        return synodic_field(y0, y1, y2, y3, p)
    return hill_synodic_field(y0, y1, y2, y3, p)


@njit(cache=True, nogil=True)
def system_integral(kind, y, p):
    if kind == NORMALIZED:
        return normalized_integral(y, p)
    elif kind == LEVI_CIVITA:
        return lc_integral(y, p)
    elif kind == HILL_LC:
        return hill_lc_integral(y, p)
    elif kind == SYNODIC:
        return synodic_integral(y, p)
    return hill_synodic_integral(y, p)


@dataclass(frozen=True)
class System:
    """A built-in vector field: integer ``kind`` plus its parameter tuple."""

    kind: int
    params: tuple

    @property
    def array(self):
        return np.asarray(self.params, dtype=np.float64)

    def rhs(self, tau, y):
        y0, y1, y2, y3 = (float(v) for v in y)
        return np.array(system_rhs(self.kind, float(tau), y0, y1, y2, y3, self.array))

    def __call__(self, tau, y):
        return self.rhs(tau, y)

    def integral(self, y):
        """First-integral residual (zero on trajectories of this system)."""
        return float(system_integral(self.kind, np.asarray(y, dtype=np.float64), self.array))
