"""Hill problem: the limit of the restricted problem near the small primary.

Synodic equations ``x'' - 2y' = 3x - x/r^3``, ``y'' + 2x' = -y/r^3`` with
first integral ``K = 3x^2 + 2/r - (x'^2 + y'^2)``. The scaled system is the
restricted-problem scaled system at ``mu = 1``, so the whole EC pipeline is
reused unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _fields
from ._fields import System
from .dynamics import DomainError, normalized_system_K
from .ecfinder import (_as_config, collision_angle, evaluate_momentum, find_roots,
                       find_roots_detailed, symmetry_class)

__all__ = [
    "K_L",
    "HillParams",
    "hill_rhs",
    "hill_lc_rhs",
    "hill_scaled_rhs",
    "hill_integral",
    "hill_lc_integral",
    "equilibria",
    "lc_equilibria",
    "ejection_initial_hill_lc",
    "hill_find_ec",
    "hill_k_hat",
    "hill_bifurcations",
    "PeriodicEC",
    "detect_periodic_ec",
    "SPECIAL_ANGLES",
]

K_L = 3.0 ** (4.0 / 3.0)
SPECIAL_ANGLES = (0.0, 0.25 * math.pi, 0.5 * math.pi, 0.75 * math.pi)


@dataclass(frozen=True)
class HillParams:
    """Number of maxima ``n`` and Hill energy ``K`` (``L = K / n^(2/3)``)."""

    n: int
    K: float

    energy_name = "K"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("n must be a positive integer")
        if not math.isfinite(self.K) or self.K <= 0.0:
            raise DomainError("K must be positive")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "K", float(self.K))

    @classmethod
    def from_L(cls, n, L):
        return cls(n, L * n ** (2.0 / 3.0))

    @property
    def mu(self):
        return 1.0

    @property
    def C(self):
        return math.nan

    @property
    def L(self):
        return self.K / self.n ** (2.0 / 3.0)

    @property
    def eps(self):
        return 1.0 / math.sqrt(self.K)

    @property
    def energy(self):
        """Continuation parameter (``K``)."""
        return self.K

    @property
    def below_k_l(self):
        """Whether the zero-velocity curves open at the equilibria."""
        return self.K < K_L

    def with_energy(self, value):
        return HillParams(self.n, value)

    def system(self):
        """Scaled Hill vector field."""
        return normalized_system_K(1.0, self.K)


def _vec(state):
    y = np.asarray(state, dtype=np.float64)
    if y.shape != (4,):
        raise DomainError("state must have four components")
    return y


def hill_rhs(state, K=0.0):
    """Synodic Hill field at ``(x, y, x', y')``; ``K`` is not used by the field."""
    y = _vec(state)
    if y[0] == 0.0 and y[1] == 0.0:
        raise DomainError("the synodic Hill field is singular at the origin")
    return np.array(_fields.hill_synodic_field(y[0], y[1], y[2], y[3], np.array([K])))


def hill_integral(state):
    """``K = 3x^2 + 2/r - (x'^2 + y'^2)``."""
    y = _vec(state)
    return float(_fields.hill_synodic_integral(y, np.array([0.0])))


def hill_lc_rhs(state, K):
    """Levi-Civita Hill field in the fictitious time ``dt = 4 r ds``."""
    y = _vec(state)
    return np.array(_fields.hill_lc_field(y[0], y[1], y[2], y[3], np.array([float(K)])))


def hill_lc_integral(state, K):
    """Residual of ``u'^2 + v'^2 = 12 rho D^2 + 8 - 4 K rho`` (``rho = u^2+v^2``, ``D = u^2-v^2``)."""
    y = _vec(state)
    return float(_fields.hill_lc_integral(y, np.array([float(K)])))


def hill_scaled_rhs(state, K):
    """Scaled Hill field; identical to the restricted scaled field at ``mu = 1``."""
    y = _vec(state)
    return normalized_system_K(1.0, K).rhs(0.0, y)


def hill_synodic_system(K):
    """Compiled synodic Hill field tracking the residual of ``K``."""
    return System(_fields.HILL_SYNODIC, (float(K),))


def hill_lc_system(K):
    """Compiled Levi-Civita Hill field."""
    return System(_fields.HILL_LC, (float(K),))


def equilibria():
    """Synodic equilibria ``(+-3^(-1/3), 0)``."""
    x = 3.0 ** (-1.0 / 3.0)
    return [(x, 0.0), (-x, 0.0)]


def lc_equilibria():
    """Levi-Civita images ``(+-3^(-1/6), 0)`` and ``(0, +-3^(-1/6))``; they rest at ``K = K_L``."""
    a = 3.0 ** (-1.0 / 6.0)
    return [(a, 0.0), (-a, 0.0), (0.0, a), (0.0, -a)]


def ejection_initial_hill_lc(theta0):
    """Levi-Civita ejection state: speed ``sqrt(8)`` along angle ``theta0``."""
    s = math.sqrt(8.0)
    return np.array([0.0, 0.0, s * math.cos(theta0), s * math.sin(theta0)])


def hill_find_ec(params, config=None, reduced=None):
    """n-EC orbits of the Hill problem.

    Parameters
    ----------
    params : HillParams
    config : FinderConfig, optional
    reduced : bool, optional
        Scan ``[0, pi/2)`` and map the roots by ``theta0 + pi/2``. Defaults to
        ``config.reduced``; the full range is scanned otherwise.
    """
    cfg = _as_config(config)
    if reduced is not None:
        cfg = cfg.with_(reduced=bool(reduced))
    return find_roots(params, cfg)


def hill_bifurcations(n, K_range=None, config=None):
    """Bifurcation events of the Hill n-EC roots by descending-``K`` root counting.

    ``K_range`` defaults to ``(1.5 * 2^(2/3) n^(2/3), K_L/2)``.
    """
    from .continuation import detect_bifurcations_params

    if K_range is None:
        K_range = (1.5 * (2.0 * n) ** (2.0 / 3.0), 0.5 * K_L)
    hi, lo = max(K_range), min(K_range)
    return detect_bifurcations_params(HillParams(n, hi), lo, config, first_only=False)


def hill_k_hat(n, config=None, K_min=None):
    """Largest ``K`` at which more than four n-EC orbits appear.

    The descending sweep starts at ``max(1.5 * 2^(2/3) n^(2/3), 1.5 * K_L)``
    and stops at the first increase in the root count.
    """
    from .continuation import detect_bifurcations_params

    start = max(1.5 * (2.0 * n) ** (2.0 / 3.0), 1.5 * K_L)
    lo = 0.25 * start if K_min is None else K_min
    res = detect_bifurcations_params(HillParams(n, start), lo, config, first_only=True)
    return res.hat


@dataclass(frozen=True)
class PeriodicEC:
    """An n-EC root sitting on a special ejection angle.

    ``kind`` is ``self_periodic`` when the orbit is itself periodic (ejection
    and collision angles agree) and ``composed`` when it closes into a
    periodic orbit together with its mirror partner. ``families`` is the
    pair sharing the orbit's symmetry: ``x`` for alpha and gamma, ``y`` for
    beta and delta.
    """

    K: float
    theta0: float
    families: tuple
    kind: str
    symmetry: str
    n: int
    theta1: float = math.nan
    event: object = field(default=None, compare=False)


def _special(theta, tol=1e-6):
    for s in SPECIAL_ANGLES:
        d = (theta - s) % math.pi
        if min(d, math.pi - d) < tol:
            return s
    return None


def _classify(params, s, cfg, event=None):
    row = evaluate_momentum(params, [s], cfg, tol=cfg.certify_tol)[0]
    if int(row[6]) != 0:
        return None
    theta1 = collision_angle(row[2:6])
    sym, periodic = symmetry_class(s, theta1, quarter=True, tol=1e-5)
    if sym == "x":
        fams = ("alpha", "gamma")
    elif sym == "y":
        fams = ("beta", "delta")
    else:
        return None
    kind = "self_periodic" if periodic else "composed"
    return PeriodicEC(params.K, s, fams, kind, sym, params.n, theta1, event)


def detect_periodic_ec(params_or_n, config=None, K_range=None, events=None):
    """Periodic EC orbits of the Hill problem at special ejection angles.

    A bifurcation event whose root angle lies within ``1e-6`` of
    ``{0, pi/4, pi/2, 3pi/4}`` is re-evaluated there and classified from its
    collision angle.

    Parameters
    ----------
    params_or_n : HillParams or int
        With ``HillParams`` the certified roots at that ``K`` are tested;
        with ``n`` the bifurcation events over ``K_range`` are tested.
    config : ContinuationConfig or FinderConfig, optional
    K_range : (float, float), optional
        Defaults to ``(1.5 * 2^(2/3) n^(2/3), K_L / 2)``.
    events : sequence of BifurcationEvent, optional
        Precomputed events; skips the sweep.
    """
    from .continuation import _as_cconfig

    ccfg = _as_cconfig(config)
    cfg = ccfg.finder
    if isinstance(params_or_n, HillParams):
        out = []
        for r in find_roots_detailed(params_or_n, cfg).roots:
            s = _special(r.theta0_star)
            found = None if s is None else _classify(params_or_n, s, cfg)
            if found is not None:
                out.append(found)
        return out
    n = int(params_or_n)
    if events is None:
        events = hill_bifurcations(n, K_range, ccfg).events
    out = []
    for ev in events:
        s = _special(ev.theta0_at)
        if s is None:
            continue
        found = _classify(HillParams(n, ev.value), s, cfg, ev)
        if found is not None:
            out.append(found)
    out.sort(key=lambda f: (-f.K, f.theta0))
    return out
