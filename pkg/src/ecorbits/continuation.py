"""Continuation of n-EC families in the energy and detection of bifurcations.

The energy parameter is the Jacobi constant ``C`` for the restricted problem
and ``K`` for the Hill problem; both decrease towards the bifurcations.
Bifurcations are found by counting certified roots on a descending sweep and
refined by bisection on the local root count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .dynamics import Params, cl1
from .ecfinder import (FAMILIES, FinderConfig, _as_config, _mod_dist, assign_labels,
                       certify_collision, evaluate_momentum, find_roots_detailed,
                       local_count, local_roots)

__all__ = [
    "ContinuationConfig",
    "BranchPoint",
    "FamilyBranch",
    "BifurcationEvent",
    "BifurcationResult",
    "Diagram",
    "ResolutionError",
    "continue_family",
    "continue_families",
    "detect_bifurcations",
    "detect_bifurcations_params",
    "diagram",
    "c_hat_curve",
]


class ResolutionError(RuntimeError):
    """The local root count is inconsistent; a finer angle grid is needed."""


@dataclass(frozen=True)
class ContinuationConfig:
    """Settings for sweeps, continuation and event refinement.

    Parameters
    ----------
    finder : FinderConfig
    sweep_step : float
        Energy decrement of the descending sweep.
    bisect_tol : float
        Width at which event bisection stops.
    resolution_floor : float
        Width below which an inconsistent local count ends the bisection
        instead of raising ``ResolutionError`` (the size of ``M`` near a
        nascent pair is then at the integration noise level).
    window : float
        Half-width in angle of the window around a cluster of new roots.
    local_samples : int
        Samples per local count.
    step_init, step_min : float
        Initial and smallest energy step of family continuation.
    """

    finder: FinderConfig = field(default_factory=FinderConfig)
    sweep_step: float = 0.01
    bisect_tol: float = 1e-8
    resolution_floor: float = 1e-6
    window: float = 0.08
    local_samples: int = 33
    step_init: float = 0.01
    step_min: float = 1e-6


def _as_cconfig(config):
    if config is None:
        return ContinuationConfig()
    if isinstance(config, FinderConfig):
        return ContinuationConfig(finder=config)
    return config


@dataclass(frozen=True)
class BranchPoint:
    energy: float
    theta0: float
    tau_star: float
    collision_residual: float
    momentum_residual: float


@dataclass(frozen=True)
class FamilyBranch:
    """One continued family; ``points`` are sorted by increasing energy."""

    label: str
    m_index: int
    energy_name: str
    points: tuple
    terminated: str | None = None

    @property
    def energies(self):
        return np.array([p.energy for p in self.points])

    @property
    def thetas(self):
        return np.array([p.theta0 for p in self.points])


@dataclass(frozen=True)
class BifurcationEvent:
    """A change of the root count, refined in the energy.

    ``kind`` is ``pitchfork_from_branch`` (new roots emerge around an existing
    root), ``tangency_birth`` (a pair appears away from existing roots) or
    ``collapse`` (roots disappear as the energy decreases).
    """

    C_bif: float
    K_bif: float
    kind: str
    theta0_at: float
    n: int
    mu: float
    count_before: int
    count_after: int
    width: float
    roots_at: tuple = ()
    window: tuple = ()

    @property
    def value(self):
        return self.K_bif if math.isnan(self.C_bif) else self.C_bif

    @property
    def delta(self):
        return self.count_after - self.count_before


@dataclass(frozen=True)
class BifurcationResult:
    """Events in descending energy and the largest energy with new roots."""

    events: tuple
    hat: float | None
    energy_name: str
    sweep: tuple = ()

    @property
    def C_hat(self):
        return self.hat if self.energy_name == "C" else None

    @property
    def K_hat(self):
        return self.hat if self.energy_name == "K" else None


@dataclass(frozen=True)
class Diagram:
    """``M`` over an angle grid (columns) and an energy grid (rows, ascending)."""

    theta0: np.ndarray
    energy: np.ndarray
    M: np.ndarray
    status: np.ndarray
    metadata: dict

    def sign_changes(self, row):
        m = self.M[row]
        ok = np.isfinite(m) & np.isfinite(np.roll(m, -1))
        s = (m > 0.0) != (np.roll(m, -1) > 0.0)
        return int(np.sum(ok & s))


# ---------------------------------------------------------------------------
# helpers


def _energy_pair(params, value):
    """(C, K) for an energy value of ``params``' kind."""
    if params.energy_name == "C":
        p = params.with_energy(value)
        return p.C, p.K
    return math.nan, value


def _count(params, cfg):
    res = find_roots_detailed(params, cfg.finder)
    return res


def _match(old, new, max_jump=0.2):
    """Indices of unmatched roots in ``old`` and ``new`` (circular distance)."""
    if not old or not new:
        return list(range(len(old))), list(range(len(new)))
    cost = np.array([[_mod_dist(a, b) for b in new] for a in old])
    r, c = linear_sum_assignment(cost)
    mo, mn = set(), set()
    for i, j in zip(r, c):
        if cost[i, j] <= max_jump:
            mo.add(i)
            mn.add(j)
    return ([i for i in range(len(old)) if i not in mo],
            [j for j in range(len(new)) if j not in mn])


def _clusters(angles, gap=0.3):
    angles = sorted(a % math.pi for a in angles)
    if not angles:
        return []
    groups = [[angles[0]]]
    for a in angles[1:]:
        if a - groups[-1][-1] < gap:
            groups[-1].append(a)
        else:
            groups.append([a])
    if len(groups) > 1 and groups[0][0] + math.pi - groups[-1][-1] < gap:
        groups[0] = [a - math.pi for a in groups[-1]] + groups[0]
        groups.pop()
    return groups


def _window(cluster, others, half):
    lo, hi = min(cluster) - half, max(cluster) + half
    for o in others:
        for shift in (-math.pi, 0.0, math.pi):
            t = o + shift
            if min(cluster) - half < t < min(cluster) and t not in cluster:
                lo = max(lo, 0.5 * (t + min(cluster)))
            if max(cluster) < t < max(cluster) + half and t not in cluster:
                hi = min(hi, 0.5 * (t + max(cluster)))
    return lo, hi


def _inside(t, lo, hi):
    for shift in (-math.pi, 0.0, math.pi):
        if lo <= t + shift <= hi:
            return True
    return False


def _refine_event(params, e_hi, e_lo, window, c_hi, c_lo, cfg):
    """Bisect the energy where the local count in ``window`` changes."""
    a, b = window
    fcfg = cfg.finder

    def count(e):
        return local_count(params.with_energy(e), a, b, fcfg, cfg.local_samples)

    while e_hi - e_lo > cfg.bisect_tol:
        mid = 0.5 * (e_hi + e_lo)
        c = count(mid)
        if c == c_hi:
            e_hi = mid
        elif c == c_lo:
            e_lo = mid
        else:
            c2 = local_count(params.with_energy(mid), a, b, fcfg, 2 * cfg.local_samples - 1)
            if c2 == c_hi:
                e_hi = mid
            elif c2 == c_lo:
                e_lo = mid
            elif e_hi - e_lo <= cfg.resolution_floor:
                warnings.warn(f"event resolution stopped at width {e_hi - e_lo:.1e}",
                              RuntimeWarning, stacklevel=3)
                break
            else:
                raise ResolutionError(
                    f"local root count {c} in [{a:.6f}, {b:.6f}] at energy {mid!r} is "
                    f"neither {c_hi} nor {c_lo}; refine the angle grid")
    return e_hi, e_lo


def _events_between(params, prev, cur, e_prev, e_cur, cfg):
    """Refined events between two sweep levels with different root counts."""
    old = [r.theta0_star for r in prev.roots]
    new = [r.theta0_star for r in cur.roots]
    uo, un = _match(old, new)
    out = []
    changed = [old[i] for i in uo] + [new[j] for j in un]
    for cluster in _clusters(changed):
        others = [t for t in old + new if not any(abs(t - c) < 1e-12 for c in cluster)]
        lo, hi = _window(cluster, [t for t in others if not any(_mod_dist(t, c) < 0.3 for c in cluster)]
                         or others, cfg.window)
        # keep matched roots that sit inside the cluster span
        c_hi = sum(_inside(t, lo, hi) for t in old)
        c_lo = sum(_inside(t, lo, hi) for t in new)
        if c_hi == c_lo:
            continue
        e_hi, e_lo = _refine_event(params, e_prev, e_cur, (lo, hi), c_hi, c_lo, cfg)
        e_bif = 0.5 * (e_hi + e_lo)
        below = params.with_energy(e_lo if c_lo > c_hi else e_hi)
        rts = local_roots(below, lo, hi, cfg.finder)
        at = float(np.mean(rts)) % math.pi if rts else 0.5 * (lo + hi) % math.pi
        if c_lo < c_hi:
            kind = "collapse"
        else:
            matched_in = [t for t in old if _inside(t, lo, hi)]
            kind = "pitchfork_from_branch" if matched_in else "tangency_birth"
        C, K = _energy_pair(params, e_bif)
        out.append(BifurcationEvent(C, K, kind, at, params.n, params.mu, c_hi, c_lo,
                                    e_hi - e_lo, tuple(r % math.pi for r in rts),
                                    (lo, hi)))
    return out


def detect_bifurcations_params(params, e_min, config=None, first_only=False):
    """Descending sweep from ``params.energy`` to ``e_min`` with event refinement.

    Returns
    -------
    BifurcationResult
        ``hat`` is the largest energy at which the root count increases.
    """
    cfg = _as_cconfig(config)
    e0 = params.energy
    steps = int(math.ceil((e0 - e_min) / cfg.sweep_step - 1e-9))
    levels = [e0 - k * cfg.sweep_step for k in range(steps)] + [e_min]
    events, sweep = [], []
    prev = None
    for e in levels:
        cur = _count(params.with_energy(e), cfg)
        sweep.append((e, cur.count))
        if prev is not None and cur.count != prev[1].count:
            evs = _events_between(params, prev[1], cur, prev[0], e, cfg)
            events.extend(evs)
            if first_only and any(ev.delta > 0 for ev in evs):
                break
        prev = (e, cur)
    events.sort(key=lambda ev: -ev.value)
    births = [ev.value for ev in events if ev.delta > 0]
    hat = max(births) if births else None
    return BifurcationResult(tuple(events), hat, params.energy_name, tuple(sweep))


def detect_bifurcations(mu, n, C_range=None, config=None):
    """Bifurcation events of the restricted n-EC roots in ``C_range``.

    ``C_range`` defaults to ``(C_L1(mu), 8)``; its upper end must lie in the
    four-root regime.
    """
    if C_range is None:
        C_range = (cl1(mu), 8.0)
    lo, hi = min(C_range), max(C_range)
    if lo < cl1(mu):
        warnings.warn("C below C_L1: the Hill region around the primary is no longer closed",
                      RuntimeWarning, stacklevel=2)
    return detect_bifurcations_params(Params(mu, n, hi), lo, config)


# ---------------------------------------------------------------------------
# continuation


def continue_family(params, energy_end, theta0_seed, config=None, label=None, m_index=-1):
    """Natural continuation of one root in the energy.

    Secant prediction of ``theta0``, bracketing around the prediction and
    Brent refinement of ``M``. The step is halved whenever no bracket is
    found, down to ``step_min``; the branch then terminates with the reason.

    Parameters
    ----------
    params : Params or HillParams
        Start energy; the seed must be a certified root there.
    energy_end : float
    theta0_seed : float
    """
    cfg = _as_cconfig(config)
    fcfg = cfg.finder
    direction = -1.0 if energy_end < params.energy else 1.0

    def M(e, t):
        return float(evaluate_momentum(params.with_energy(e), [t], fcfg)[0, 0])

    def solve(e, guess, width):
        a, b = guess - width, guess + width
        fa, fb = M(e, a), M(e, b)
        if not (np.isfinite(fa) and np.isfinite(fb)) or (fa > 0.0) == (fb > 0.0):
            return None
        return brentq(lambda t: M(e, t), a, b, xtol=fcfg.root_xtol)

    def point(e, t):
        p = params.with_energy(e)
        res, tau = certify_collision(p, t, fcfg)
        m = abs(M(e, t))
        return BranchPoint(e, t % math.pi, tau, res, m)

    e = params.energy
    t = solve(e, theta0_seed, 1e-3) or theta0_seed
    pts = [point(e, t)]
    dt_de = 0.0
    step = cfg.step_init
    reason = None
    while direction * (energy_end - e) > 1e-12:
        h = min(step, abs(energy_end - e))
        e_new = e + direction * h
        pred = t + dt_de * direction * h
        width = max(4.0 * abs(dt_de) * h, 1e-4)
        t_new = solve(e_new, pred, width)
        if t_new is not None and abs(t_new - pred) > 10.0 * max(abs(dt_de) * h, 1e-4):
            t_new = None
        if t_new is None:
            step *= 0.5
            if step < cfg.step_min:
                reason = f"branch lost near energy {e!r} (collapse candidate)"
                break
            continue
        dt_de = (t_new - t) / (direction * h)
        e, t = e_new, t_new
        pts.append(point(e, t))
        step = min(2.0 * step, cfg.step_init)
    pts.sort(key=lambda q: q.energy)
    lab = label if label is not None else (FAMILIES[m_index] if 0 <= m_index < 4 else "extra")
    return FamilyBranch(lab, m_index, params.energy_name, tuple(pts), reason)


def continue_families(params, energy_end, config=None):
    """Continue the four primary roots of ``params``."""
    cfg = _as_cconfig(config)
    roots = find_roots_detailed(params, cfg.finder).roots
    return [continue_family(params, energy_end, r.theta0_star, cfg, r.family, r.m_index)
            for r in roots if r.m_index >= 0]


# ---------------------------------------------------------------------------
# diagrams


def diagram(mu, n, theta_grid, C_grid, config=None, params=None):
    """Dense ``M`` matrix over ``theta_grid`` x ``C_grid`` (rows by ascending energy).

    Failed cells are ``nan`` with a nonzero status.
    """
    cfg = _as_cconfig(config)
    fcfg = cfg.finder
    th = np.asarray(theta_grid, dtype=float)
    if th.ndim == 0:
        th = np.arange(int(th)) * (math.pi / int(th))
    eg = np.asarray(C_grid, dtype=float)
    eg = np.sort(eg)
    base = params if params is not None else Params(mu, n, float(eg[-1]))
    rows = [None] * eg.size
    single = replace(fcfg, jobs=1)

    def run(i):
        rows[i] = evaluate_momentum(base.with_energy(float(eg[i])), th, single)

    if fcfg.jobs > 1:
        with ThreadPoolExecutor(fcfg.jobs) as pool:
            list(pool.map(run, range(eg.size)))
    else:
        for i in range(eg.size):
            run(i)
    M = np.array([r[:, 0] for r in rows])
    st = np.array([r[:, 6] for r in rows]).astype(int)
    meta = {
        "mu": float(base.mu), "n": int(n), "energy": base.energy_name,
        "theta_size": int(th.size), "energy_size": int(eg.size),
        "abs_tol": fcfg.integrator.abs_tol, "rel_tol": fcfg.integrator.rel_tol,
    }
    return Diagram(th, eg, M, st, meta)


def c_hat_curve(mu_list, n, config=None, C_max=8.0):
    """``(mu, C_hat, K_hat, L_hat)`` for each ``mu``; ``None`` where no event lies above ``C_L1``."""
    out = []
    for mu in mu_list:
        res = detect_bifurcations(mu, n, (cl1(mu), C_max), config)
        if res.hat is None:
            out.append((float(mu), None, None, None))
            continue
        K = Params(mu, n, res.hat).K
        out.append((float(mu), res.hat, K, K / n ** (2.0 / 3.0)))
    return out
