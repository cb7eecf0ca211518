"""Ejection-collision orbits as zeros of the angular momentum at the n-th minimum.

For an ejection angle ``theta0`` the scaled ejection orbit starts at
``(0, 0, cos(theta0), sin(theta0))``. ``M(n, theta0)`` is ``U*V' - V*U'`` at
its ``n``-th radial minimum; at such a minimum ``M = 0`` forces a collision, so
zeros of ``M`` are exactly the n-EC orbits. ``M`` is ``pi``-periodic in
``theta0``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy.optimize import brentq, minimize_scalar

from . import integrator as _integ
from .integrator import IntegratorConfig, _propagate

__all__ = [
    "FinderConfig",
    "MomentumSample",
    "ECOrbit",
    "FindResult",
    "CertificationError",
    "momentum_at_nth_min",
    "evaluate_momentum",
    "scan",
    "find_roots",
    "find_roots_detailed",
    "certify_collision",
    "local_count",
    "local_roots",
    "collision_angle",
    "symmetry_class",
    "assign_labels",
    "FAMILIES",
]

# Greek tag of the primary root near m*pi/4, indexed by m
FAMILIES = ("gamma", "delta", "alpha", "beta")
_STATUS = ("ok", "max_steps", "step_underflow", "escape", "degenerate_event")


class CertificationError(RuntimeError):
    """A candidate root did not end at a collision."""


@dataclass(frozen=True)
class FinderConfig:
    """Settings for momentum evaluation and root finding.

    Parameters
    ----------
    integrator : IntegratorConfig
        Step control for momentum samples. ``tau_max`` and ``r_max`` of
        ``inf`` are replaced by ``3*n*pi + 10`` and ``escape_radius``.
    grid_size, max_grid : int
        Initial and largest uniform grid over ``[0, pi)``.
    min_cells : int
        Roots closer than this many cells trigger grid doubling.
    root_xtol : float
        Absolute tolerance on refined root angles.
    certify_tol, certify_threshold : float
        Tolerance of the certification run and largest accepted collision radius.
    tangency_threshold : float
        ``|M|`` below which a sign-preserving local extremum is reported.
    fd_step : float
        Step of the central differences used for ``dM/dtheta0``.
    local_tol : float
        Tolerance for the high-precision evaluations of local analyses.
    escape_radius : float
        Escape radius ``U^2 + V^2`` of the scaled orbit.
    reduced : bool
        Use the extra quarter-turn symmetry ``M(theta0 + pi/2) = M(theta0)``
        (valid for the Hill problem only) to scan ``[0, pi/2)``.
    jobs : int
        Worker threads for batches of samples.
    """

    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    grid_size: int = 1024
    max_grid: int = 8192
    min_cells: int = 4
    root_xtol: float = 1e-12
    certify_tol: float = 1e-13
    certify_threshold: float = 1e-6
    tangency_threshold: float = 1e-8
    fd_step: float = 1e-5
    local_tol: float = 1e-13
    escape_radius: float = 100.0
    reduced: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.grid_size < 16:
            raise ValueError("grid_size must be at least 16")
        if self.jobs < 1:
            raise ValueError("jobs must be positive")

    def with_(self, **kw):
        return replace(self, **kw)


def _as_config(config):
    if config is None:
        return FinderConfig()
    if isinstance(config, IntegratorConfig):
        return FinderConfig(integrator=config)
    return config


@dataclass(frozen=True)
class MomentumSample:
    """Angular momentum at the n-th minimum for one ejection angle."""

    theta0: float
    M: float
    tau_star: float
    r_min: float
    status: str = "ok"
    max_residual: float = 0.0
    n_maxima: int = 0

    @property
    def ok(self):
        return self.status == "ok"


@dataclass(frozen=True)
class ECOrbit:
    """A certified zero of ``M`` and its diagnostics.

    ``m_index`` identifies the four primary roots (near ``m*pi/4`` for small
    ``eps``); ``family`` is its Greek tag (``FAMILIES[m_index]``), or
    ``extra_k`` for bifurcated roots.
    ``symmetry`` is ``x`` for orbits symmetric about the line of primaries,
    ``y`` for the perpendicular axis (Hill only), ``xy`` for both, and
    ``pair`` when the orbit is the mirror image of another root.
    """

    theta0_star: float
    family: str
    m_index: int
    mu: float
    C: float
    K: float
    n: int
    tau_star: float
    collision_residual: float
    momentum_residual: float
    theta1: float = math.nan
    symmetry: str = "pair"
    periodic: bool = False
    certified: bool = True


@dataclass(frozen=True)
class FindResult:
    """Roots, rejected candidates and tangency candidates of one search."""

    roots: tuple
    rejected: tuple
    tangencies: tuple
    grid_size: int
    failed_samples: int

    @property
    def count(self):
        return len(self.roots)


# ---------------------------------------------------------------------------
# batched evaluation


@njit(cache=True, nogil=True)
def _momentum_batch(kind, p, thetas, n, atol, rtol, h_init, hmin, hmax,
                    max_steps, tau_max, r_max, out):
    # out columns: M, tau, U, V, Ud, Vd, status, max_res, n_max
    ev_t = np.zeros(3)
    ev_y = np.zeros((3, 4))
    ev_k = np.zeros(3, dtype=np.int64)
    y0 = np.zeros(4)
    for i in range(thetas.shape[0]):
        y0[0] = 0.0
        y0[1] = 0.0
        y0[2] = math.cos(thetas[i])
        y0[3] = math.sin(thetas[i])
        res = _propagate(kind, p, y0, 0.0, 0.0, n, atol, rtol, h_init, hmin, hmax,
                         max_steps, tau_max, r_max, False, ev_t, ev_y, ev_k)
        y = ev_y[ev_y.shape[0] - 1]
        status = res[0]
        out[i, 6] = status
        out[i, 7] = res[7]
        out[i, 8] = res[4]
        if status == 0:
            out[i, 0] = y[0] * y[3] - y[1] * y[2]
            out[i, 1] = res[1]
            for j in range(4):
                out[i, 2 + j] = y[j]
        else:
            for j in range(6):
                out[i, j] = np.nan


def _integrator_for(cfg, n, tol=None):
    ic = cfg.integrator
    if tol is not None:
        ic = ic.tightened(tol)
    tau_max = ic.tau_max if math.isfinite(ic.tau_max) else 3.0 * n * math.pi + 10.0
    r_max = ic.r_max if math.isfinite(ic.r_max) else cfg.escape_radius
    return replace(ic, tau_max=tau_max, r_max=r_max)


def evaluate_momentum(params, thetas, config=None, tol=None):
    """Evaluate ``M`` at many angles.

    Returns
    -------
    ndarray, shape (len(thetas), 9)
        Columns ``M, tau_star, U, V, U', V', status, max_residual, n_maxima``.
        Failed samples carry ``nan`` in the first six columns.
    """
    cfg = _as_config(config)
    ic = _integrator_for(cfg, params.n, tol)
    system = params.system()
    p = system.array
    th = np.ascontiguousarray(np.asarray(thetas, dtype=np.float64).reshape(-1))
    out = np.empty((th.shape[0], 9))
    args = (int(system.kind), p)
    tail = (int(params.n), ic.abs_tol, ic.rel_tol, ic.h_init, ic.h_min, ic.h_max,
            int(ic.max_steps), ic.tau_max, ic.r_max)

    def run(lo, hi):
        _momentum_batch(*args, th[lo:hi], *tail, out[lo:hi])

    if cfg.jobs == 1 or th.shape[0] < 2 * cfg.jobs:
        run(0, th.shape[0])
    else:
        edges = np.linspace(0, th.shape[0], cfg.jobs + 1).astype(int)
        with ThreadPoolExecutor(cfg.jobs) as pool:
            list(pool.map(run, edges[:-1], edges[1:]))
    return out


def _sample(theta, row):
    status = _STATUS[int(row[6])]
    r = row[2] ** 2 + row[3] ** 2
    return MomentumSample(float(theta), float(row[0]), float(row[1]), float(r), status,
                          float(row[7]), int(row[8]))


def momentum_at_nth_min(params, theta0, config=None):
    """``M(n, theta0)`` with its event time and minimum radius.

    Raises
    ------
    IntegrationError
        If the orbit fails to reach its ``n``-th minimum; the message carries
        ``theta0`` and the energy.
    """
    cfg = _as_config(config)
    ic = _integrator_for(cfg, params.n)
    system = params.system()
    state0 = (0.0, 0.0, math.cos(theta0), math.sin(theta0))
    try:
        ev, summ = _integ.propagate_to_nth_min(system, state0, params.n, ic)
    except _integ.IntegrationError as exc:
        raise type(exc)(f"{exc} (theta0={theta0!r}, {_energy_text(params)})",
                        exc.tau, exc.state) from exc
    U, V, Ud, Vd = ev.state
    return MomentumSample(float(theta0), U * Vd - V * Ud, ev.tau, U * U + V * V, "ok",
                          summ.max_integral_residual, summ.n_maxima)


def _energy_text(params):
    C = getattr(params, "C", math.nan)
    if isinstance(C, float) and math.isfinite(C):
        return f"C={C!r}"
    return f"K={params.K!r}"


def _grid(size, period=math.pi):
    return np.arange(size) * (period / size)


def scan(params, grid_size=1024, config=None):
    """Sample ``M`` on the uniform grid ``k*pi/grid_size``.

    Failed samples are kept with their failure status and ``nan`` values.
    """
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    th = _grid(grid_size)
    out = evaluate_momentum(params, th, config)
    return [_sample(t, row) for t, row in zip(th, out)]


# ---------------------------------------------------------------------------
# certification and classification


def collision_angle(state):
    """Direction of the velocity at a collision, reduced to ``[0, pi)``."""
    return math.atan2(state[3], state[2]) % math.pi


def _mod_dist(a, b, period=math.pi):
    d = (a - b) % period
    return min(d, period - d)


def symmetry_class(theta0, theta1, quarter=False, tol=1e-6):
    """Symmetry of an EC orbit from its ejection and collision angles.

    Returns ``(symmetry, periodic)``. ``x``: ``theta0 + theta1 = 0 (mod pi)``;
    ``y`` (only with ``quarter``): ``theta0 + theta1 = pi/2 (mod pi)``.
    ``periodic`` when ``theta1 = theta0 (mod pi)``, i.e. the regularized
    continuation repeats the orbit.
    """
    s = theta0 + theta1
    xs = _mod_dist(s, 0.0) < tol
    ys = quarter and _mod_dist(s, 0.5 * math.pi) < tol
    sym = "xy" if xs and ys else "x" if xs else "y" if ys else "pair"
    return sym, _mod_dist(theta0, theta1) < tol


def certify_collision(params, theta0_star, config=None):
    """Re-propagate at the certification tolerance.

    Returns
    -------
    collision_residual : float
        ``sqrt(U^2 + V^2)`` at the n-th minimum.
    tau_star : float

    Raises
    ------
    CertificationError
        If the residual exceeds ``certify_threshold``.
    """
    cfg = _as_config(config)
    res, tau, _ = _certify(params, theta0_star, cfg)
    if not res <= cfg.certify_threshold:
        raise CertificationError(
            f"collision residual {res:.3e} at theta0={theta0_star!r} exceeds "
            f"{cfg.certify_threshold:.1e}")
    return res, tau


def _certify(params, theta0, cfg):
    row = evaluate_momentum(params, [theta0], cfg, tol=cfg.certify_tol)[0]
    if int(row[6]) != 0:
        return math.inf, math.nan, row
    return math.hypot(row[2], row[3]), float(row[1]), row


# ---------------------------------------------------------------------------
# local structure of M


class _Evaluator:
    """Caching scalar access to ``M`` for one parameter set."""

    def __init__(self, params, cfg, tol=None):
        self.params = params
        self.cfg = cfg
        self.tol = tol
        self.cache = {}

    def many(self, thetas):
        thetas = [float(t) for t in thetas]
        todo = [t for t in thetas if t not in self.cache]
        if todo:
            out = evaluate_momentum(self.params, todo, self.cfg, self.tol)
            for t, row in zip(todo, out):
                self.cache[t] = float(row[0])
        return np.array([self.cache[t] for t in thetas])

    def __call__(self, theta):
        return self.many([theta])[0]

    def slope(self, theta):
        h = self.cfg.fd_step
        a, b = self.many([theta - h, theta + h])
        return (b - a) / (2.0 * h)


def _refine_extremum(ev, a, b, sign):
    # sign=+1 locates a maximum of M, -1 a minimum
    r = minimize_scalar(lambda t: -sign * ev(t), bounds=(a, b), method="bounded",
                        options={"xatol": 1e-10})
    return float(r.x), float(ev(float(r.x)))


def _hidden_pair(ev, a, b, slope_sign):
    """Critical points hidden inside ``[a, b]`` where ``M`` looks monotone.

    Minimizes ``slope_sign * dM/dtheta``; a negative minimum reveals critical
    points, which are returned when they lie inside the interval.
    """
    def s(t):
        return slope_sign * ev.slope(t)

    r = minimize_scalar(s, bounds=(a, b), method="bounded", options={"xatol": 1e-9})
    tm = float(r.x)
    if not s(tm) < 0.0:
        return []
    out = []
    for end in (a, b):
        if s(end) > 0.0:
            out.append(brentq(s, min(end, tm), max(end, tm), xtol=1e-11))
    return out


def _augment(ev, th, m, check_hidden, periodic):
    """Add critical points to a sample sequence; returns sorted (theta, M) lists."""
    pts = list(zip(th, m))
    k = len(th)
    rng = range(k) if periodic else range(1, k - 1)
    step = th[1] - th[0]
    for i in rng:
        im, ip = (i - 1) % k, (i + 1) % k
        a, b = th[i] - step, th[i] + step
        d1 = m[i] - m[im]
        d2 = m[ip] - m[i]
        if not (np.isfinite(d1) and np.isfinite(d2)):
            continue
        if d1 * d2 < 0.0 or (d1 == 0.0) != (d2 == 0.0):
            c, mc = _refine_extremum(ev, a, b, 1 if d1 > 0 else -1)
            pts.append((c, mc))
    if check_hidden:
        for i in range(k if periodic else k - 1):
            j = (i + 1) % k
            # critical points of a nascent pair may sit in the neighbouring cells
            a = th[i] - step
            b = th[i] + 2.0 * step
            if not periodic:
                a, b = max(a, th[0]), min(b, th[-1])
            if not (np.isfinite(m[i]) and np.isfinite(m[j])):
                continue
            near_root = m[i] == 0.0 or (m[i] > 0.0) != (m[j] > 0.0)
            if not near_root:
                continue
            for c in _hidden_pair(ev, a, b, 1.0 if m[j] > m[i] else -1.0):
                pts.append((c, ev(c)))
    return pts


def _sign_changes(pts, periodic, period=math.pi):
    """Count sign changes along points sorted in theta (contiguous finite runs)."""
    if periodic:
        pts = sorted(((t % period, v) for t, v in pts), key=lambda q: q[0])
    else:
        pts = sorted(pts, key=lambda q: q[0])
    vals = [v for _, v in pts]
    count = 0
    brackets = []
    n = len(vals)
    last = n if periodic else n - 1
    for i in range(last):
        j = (i + 1) % n
        a, b = vals[i], vals[j]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if (a > 0.0) != (b > 0.0) and not (a == 0.0 and b == 0.0):
            count += 1
            ta, tb = pts[i][0], pts[j][0]
            if j == 0:
                tb += period
            brackets.append((ta, tb, a, b))
    return count, brackets


def local_count(params, a, b, config=None, samples=33):
    """Number of zeros of ``M`` in ``[a, b]``, robust to nearly coincident roots.

    Samples ``M`` at high precision, adds every interior critical point
    (discrete extrema refined by bounded minimization, plus critical pairs
    hidden inside root-bearing cells detected through the sign of
    ``dM/dtheta``) and counts sign changes along the merged sequence.
    """
    cfg = _as_config(config)
    ev = _Evaluator(params, cfg, cfg.local_tol)
    th = np.linspace(a, b, samples)
    m = ev.many(th)
    pts = _augment(ev, th, m, True, False)
    return _sign_changes(pts, False)[0]


def local_roots(params, a, b, config=None, samples=33):
    """Zeros of ``M`` in ``[a, b]`` located as in :func:`local_count`, refined by Brent's method."""
    cfg = _as_config(config)
    ev = _Evaluator(params, cfg, cfg.local_tol)
    th = np.linspace(a, b, samples)
    pts = _augment(ev, th, ev.many(th), True, False)
    out = []
    for ta, tb, fa, fb in _sign_changes(pts, False)[1]:
        if fa == 0.0 or fb == 0.0:
            out.append(ta if fa == 0.0 else tb)
            continue
        out.append(brentq(ev, ta, tb, xtol=cfg.root_xtol))
    return out


# ---------------------------------------------------------------------------
# labels


def _wrap_half(x, period=math.pi):
    return (x + 0.5 * period) % period - 0.5 * period


def assign_labels(roots, quarter=math.pi / 4.0):
    """Match roots to the reference pattern ``m*pi/4 + shift``.

    Chooses the four roots and cyclic assignment whose residuals are most
    nearly a common shift, with the shift taken in ``[-0.04, pi/4 - 0.04)``
    (roots drift towards larger angles as the energy decreases). Returns a
    list of ``m`` indices (``-1`` for extra roots).
    """
    r = np.sort(np.asarray(roots, dtype=float) % math.pi)
    k = len(r)
    if k < 4:
        return [-1] * k
    best = None
    for subset in itertools.combinations(range(k), 4):
        sub = r[list(subset)]
        for rot in range(4):
            ms = [(j + rot) % 4 for j in range(4)]
            res = np.array([_wrap_half(sub[j] - ms[j] * quarter) for j in range(4)])
            shift = float(np.mean(res))
            spread = float(np.sum((res - shift) ** 2))
            if not (-0.04 <= shift < quarter - 0.04):
                continue
            key = (spread, shift)
            if best is None or key < best[0]:
                best = (key, subset, ms)
    labels = [-1] * k
    if best is None:
        return labels
    for idx, m in zip(best[1], best[2]):
        labels[idx] = m
    order = np.argsort(np.asarray(roots, dtype=float) % math.pi, kind="stable")
    out = [-1] * k
    for pos, orig in enumerate(order):
        out[orig] = labels[pos]
    return out


# ---------------------------------------------------------------------------
# root finding


def _min_spacing(values, period=math.pi):
    if len(values) < 2:
        return math.inf
    v = np.sort(np.asarray(values) % period)
    gaps = np.diff(np.concatenate([v, [v[0] + period]]))
    return float(gaps.min())


def _brackets(params, cfg, size):
    period = math.pi / 2.0 if cfg.reduced else math.pi
    th = _grid(size, period)
    out = evaluate_momentum(params, th, cfg)
    m = out[:, 0]
    failed = int(np.sum(out[:, 6] != 0))
    ev = _Evaluator(params, cfg)
    for t, v in zip(th, m):
        ev.cache[float(t)] = float(v)
    # wrap-around neighbour: M is periodic
    pts = _augment(ev, list(th), list(m), True, True)
    count, br = _sign_changes(pts, True, period)
    tangencies = []
    for t, v in pts:
        if np.isfinite(v) and abs(v) < cfg.tangency_threshold:
            tangencies.append((t % period, v))
    return br, tangencies, failed, ev, period


def find_roots_detailed(params, config=None):
    """Locate, refine, certify and label every zero of ``M`` over ``[0, pi)``.

    Returns
    -------
    FindResult
    """
    cfg = _as_config(config)
    size = cfg.grid_size
    while True:
        br, tang, failed, ev, period = _brackets(params, cfg, size)
        mids = [0.5 * (a + b) for a, b, _, _ in br]
        cell = period / size
        if _min_spacing(mids, period) >= cfg.min_cells * cell or 2 * size > cfg.max_grid:
            break
        size *= 2
    roots = []
    for a, b, fa, fb in br:
        if fa == 0.0:
            roots.append(a)
            continue
        if fb == 0.0:
            roots.append(b)
            continue

        def f(t):
            return ev(t % period if t >= period else t)

        try:
            roots.append(brentq(f, a, b, xtol=cfg.root_xtol, rtol=4 * np.finfo(float).eps))
        except ValueError:
            continue
    roots = [r % period for r in roots]
    if cfg.reduced:
        roots = roots + [r + 0.5 * math.pi for r in roots]
    roots.sort()
    accepted, rejected = [], []
    quarter = getattr(params, "mu", 0.0) == 1.0
    C = getattr(params, "C", math.nan)
    labels = assign_labels(roots)
    extra = 0
    for theta, m_idx in zip(roots, labels):
        res, tau, row = _certify(params, theta, cfg)
        ok = res <= cfg.certify_threshold
        th1 = collision_angle(row[2:6]) if np.isfinite(row[4]) else math.nan
        sym, per = symmetry_class(theta, th1, quarter, tol=1e-5)
        if m_idx >= 0:
            fam = FAMILIES[m_idx]
        else:
            extra += 1
            fam = f"extra_{extra}"
        orbit = ECOrbit(float(theta), fam, int(m_idx), float(params.mu), float(C),
                        float(params.K), int(params.n), tau, res,
                        abs(float(row[0])) if np.isfinite(row[0]) else math.inf,
                        th1, sym, per, ok)
        (accepted if ok else rejected).append(orbit)
    if rejected:
        warnings.warn(f"{len(rejected)} candidate root(s) failed collision certification",
                      RuntimeWarning, stacklevel=2)
    tang_out = tuple(t for t, v in tang
                     if all(_mod_dist(t, r) > 10 * cfg.root_xtol + 1e-9 for r in roots))
    return FindResult(tuple(accepted), tuple(rejected), tang_out, size, failed)


def find_roots(params, config=None):
    """Certified n-EC orbits sorted by ejection angle."""
    return list(find_roots_detailed(params, config).roots)
