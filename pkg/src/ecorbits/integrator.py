"""Adaptive embedded Runge-Kutta 8(7) propagation with radial-event detection.

The stepper uses the 13-stage Prince-Dormand pair with a PI step-size
controller. Radial extrema are detected as sign changes of
``g = U*U' + V*V'`` between accepted steps and refined by re-stepping from
the start of the bracketing step (bisection, then an Illinois secant).

Built-in systems (objects with ``kind`` and ``params``) run in compiled
kernels. Any other callable ``f(tau, y) -> dy`` runs through the very same
kernel source in interpreted mode.
"""

from __future__ import annotations

import math
import types
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from ._fields import system_integral, system_rhs
from ._tableau import A as _A, B as _B, C as _C, E as _E

__all__ = [
    "IntegratorConfig",
    "EventRecord",
    "TrajectorySummary",
    "IntegrationError",
    "StepSizeError",
    "PropagationError",
    "EscapeError",
    "DegenerateEventError",
    "step",
    "propagate",
    "propagate_to_nth_min",
    "angular_momentum",
]

OK, MAX_STEPS, H_MIN, TAU_MAX, DEGENERATE = range(5)
RADIAL_MAX, RADIAL_MIN = 0, 1
_STAGES = 13
_MAX_EVENTS = 512


class IntegrationError(RuntimeError):
    """Base class for propagation failures; ``state`` and ``tau`` give the last good point."""

    def __init__(self, message, tau=math.nan, state=None):
        super().__init__(message)
        self.tau = tau
        self.state = state


class StepSizeError(IntegrationError):
    """The controller requested a step below ``h_min``."""


class PropagationError(IntegrationError):
    """``max_steps`` was exhausted."""


class EscapeError(IntegrationError):
    """``tau_max`` or ``r_max`` was reached before the requested event."""


class DegenerateEventError(IntegrationError):
    """An event bracket could not be refined."""


_ERRORS = {
    MAX_STEPS: (PropagationError, "maximum number of steps exceeded"),
    H_MIN: (StepSizeError, "step size fell below h_min"),
    TAU_MAX: (EscapeError, "tau_max or r_max reached before the requested event"),
    DEGENERATE: (DegenerateEventError, "event refinement failed"),
}


@dataclass(frozen=True)
class IntegratorConfig:
    """Step-control settings.

    Parameters
    ----------
    abs_tol, rel_tol : float
        Mixed error tolerance per component.
    h_init, h_min, h_max : float
        Initial, smallest and largest step magnitudes in regularized time.
    max_steps : int
        Cap on accepted plus rejected steps.
    tau_max : float
        Regularized-time horizon for event searches. Reaching it means the
        orbit never produced the requested event.
    r_max : float
        Escape radius: event searches stop once ``y0**2 + y1**2`` exceeds it.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    h_init: float = 1e-2
    h_min: float = 1e-12
    h_max: float = 0.5
    max_steps: int = 200_000
    tau_max: float = math.inf
    r_max: float = math.inf

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ValueError("need 0 < h_min <= h_init <= h_max")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def tightened(self, tol):
        """Copy with both tolerances set to ``tol``."""
        return replace(self, abs_tol=tol, rel_tol=tol)


@dataclass(frozen=True)
class EventRecord:
    """A radial extremum along a trajectory."""

    tau: float
    state: tuple
    kind: str
    index: int

    @property
    def g(self):
        U, V, Ud, Vd = self.state
        return U * Ud + V * Vd


@dataclass(frozen=True)
class TrajectorySummary:
    """Diagnostics of one propagation."""

    tau_final: float
    n_steps: int
    n_rejected: int
    n_maxima: int
    n_minima: int
    max_integral_residual: float
    events: tuple = field(default=())


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True)
def _attempt(kind, p, t, y, h, k, ytmp, ynew, yerr):
    for s in range(_STAGES):
        for i in range(4):
            acc = 0.0
            for j in range(s):
                acc += _A[s, j] * k[j, i]
            ytmp[i] = y[i] + h * acc
        d0, d1, d2, d3 = system_rhs(kind, t + _C[s] * h, ytmp[0], ytmp[1], ytmp[2], ytmp[3], p)
        k[s, 0] = d0
        k[s, 1] = d1
        k[s, 2] = d2
        k[s, 3] = d3
    for i in range(4):
        hi = 0.0
        lo = 0.0
        for s in range(_STAGES):
            hi += _B[s] * k[s, i]
            lo += _E[s] * k[s, i]
        ynew[i] = y[i] + h * hi
        yerr[i] = h * lo


@njit(cache=True, nogil=True)
def _error_norm(y, ynew, yerr, atol, rtol):
    err = 0.0
    for i in range(4):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        e = abs(yerr[i]) / sc
        if e > err:
            err = e
    return err


@njit(cache=True, nogil=True)
def _controlled_step(kind, p, t, y, h, atol, rtol, hmin, hmax, errold,
                     k, ytmp, ynew, yerr):
    # returns (status, h_used, h_next, err, n_rejected)
    alpha = 0.7 / 8.0
    beta = 0.4 / 8.0
    sgn = 1.0 if h >= 0.0 else -1.0
    rejected = 0
    while True:
        if abs(h) < hmin:
            return H_MIN, h, h, math.inf, rejected
        _attempt(kind, p, t, y, h, k, ytmp, ynew, yerr)
        err = _error_norm(y, ynew, yerr, atol, rtol)
        if err <= 1.0 and np.isfinite(err):
            if err == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * err ** (-alpha) * errold ** beta
                fac = min(5.0, max(0.2, fac))
            if rejected > 0:
                fac = min(fac, 1.0)
            hn = min(abs(h) * fac, hmax)
            return OK, h, sgn * hn, max(err, 1e-4), rejected
        rejected += 1
        if np.isfinite(err):
            fac = max(0.2, 0.9 * err ** (-1.0 / 8.0))
        else:
            fac = 0.2
        h = h * fac


@njit(cache=True, nogil=True)
def _gfun(y):
    return y[0] * y[2] + y[1] * y[3]


@njit(cache=True, nogil=True)
def _refine_event(kind, p, t, y, h, g0, g1, k, ytmp, ynew, yerr, yout):
    # root of g along the sub-step fraction x in (0, 1]
    tol = 1e-13
    lo, hi = 0.0, 1.0
    glo, ghi = g0, g1
    for _ in range(12):
        mid = 0.5 * (lo + hi)
        _attempt(kind, p, t, y, mid * h, k, ytmp, ynew, yerr)
        gm = _gfun(ynew)
        if gm == 0.0:
            lo = mid
            hi = mid
            break
        if (gm > 0.0) == (ghi > 0.0):
            hi, ghi = mid, gm
        else:
            lo, glo = mid, gm
    x = hi
    side = 0
    converged = lo == hi
    for _ in range(60):
        if converged:
            break
        if ghi == glo:
            break
        x = hi - ghi * (hi - lo) / (ghi - glo)
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
        _attempt(kind, p, t, y, x * h, k, ytmp, ynew, yerr)
        gx = _gfun(ynew)
        nrm = 1.0 + ynew[0] ** 2 + ynew[1] ** 2 + ynew[2] ** 2 + ynew[3] ** 2
        if abs(gx) <= tol * nrm or (hi - lo) * abs(h) < 1e-15:
            converged = True
            break
        if (gx > 0.0) == (ghi > 0.0):
            hi, ghi = x, gx
            if side == 1:
                glo *= 0.5
            side = 1
        else:
            lo, glo = x, gx
            if side == -1:
                ghi *= 0.5
            side = -1
    _attempt(kind, p, t, y, x * h, k, ytmp, ynew, yerr)
    for i in range(4):
        yout[i] = ynew[i]
    if not converged:
        nrm = 1.0 + yout[0] ** 2 + yout[1] ** 2 + yout[2] ** 2 + yout[3] ** 2
        if abs(_gfun(yout)) > 1e-9 * nrm:
            return DEGENERATE, t + x * h
    return OK, t + x * h


@njit(cache=True, nogil=True)
def _propagate(kind, p, y0, t0, t1, n_target, atol, rtol, h_init, hmin, hmax,
               max_steps, tau_max, r_max, refine_all, ev_t, ev_y, ev_kind):
    """Integrate from ``t0``.

    With ``n_target == 0`` integrate to ``t1`` exactly (either direction).
    Otherwise stop at the ``n_target``-th radial minimum.
    Returns (status, t, n_steps, n_rejected, n_max, n_min, n_events, max_res).
    The final state is written into ``y0``'s copy returned in ``ev_y[-1]``.
    """
    k = np.empty((_STAGES, 4))
    ytmp = np.empty(4)
    ynew = np.empty(4)
    yerr = np.empty(4)
    yref = np.empty(4)
    ysc = np.empty(4)
    esc = np.empty(4)
    y = y0.copy()
    t = t0
    direction = 1.0
    if n_target == 0 and t1 < t0:
        direction = -1.0
    h = direction * min(h_init, hmax)
    errold = 1e-4
    n_steps = 0
    n_rej = 0
    n_max = 0
    n_min = 0
    n_ev = 0
    cap = ev_t.shape[0] - 1
    max_res = abs(system_integral(kind, y, p))
    armed = False
    g_prev = _gfun(y)
    last = ev_t.shape[0] - 1
    while True:
        if n_steps >= max_steps:
            for i in range(4):
                ev_y[last, i] = y[i]
            return MAX_STEPS, t, n_steps, n_rej, n_max, n_min, n_ev, max_res
        if n_target == 0:
            remaining = t1 - t
            if remaining * direction <= 0.0:
                break
            if abs(h) > abs(remaining):
                h = remaining
        elif abs(t - t0) >= tau_max or y[0] * y[0] + y[1] * y[1] > r_max:
            for i in range(4):
                ev_y[last, i] = y[i]
            return TAU_MAX, t, n_steps, n_rej, n_max, n_min, n_ev, max_res
        status, hused, hnext, errold, rej = _controlled_step(
            kind, p, t, y, h, atol, rtol, hmin, hmax, errold, k, ytmp, ynew, yerr)
        n_rej += rej
        n_steps += 1 + rej
        if status != OK:
            if n_target == 0 and abs(h) < hmin and abs(t1 - t) < hmin:
                break
            for i in range(4):
                ev_y[last, i] = y[i]
            return status, t, n_steps, n_rej, n_max, n_min, n_ev, max_res
        g_new = _gfun(ynew)
        t_new = t + hused
        if n_target == 0 and abs(t1 - t_new) <= 1e-15 * max(1.0, abs(t1)):
            t_new = t1
        if armed and n_target > 0:
            crossed_min = g_prev < 0.0 and g_new >= 0.0
            crossed_max = g_prev > 0.0 and g_new <= 0.0
            if direction < 0.0:
                crossed_min, crossed_max = crossed_max, crossed_min
            if crossed_min or crossed_max:
                is_target = crossed_min and n_min + 1 == n_target
                t_ev = t_new
                for i in range(4):
                    yref[i] = ynew[i]
                if is_target or refine_all:
                    st, t_ev = _refine_event(kind, p, t, y, hused, g_prev, g_new,
                                             k, ytmp, ysc, esc, yref)
                    if st != OK:
                        for i in range(4):
                            ev_y[last, i] = y[i]
                        return st, t, n_steps, n_rej, n_max, n_min, n_ev, max_res
                if crossed_min:
                    n_min += 1
                else:
                    n_max += 1
                if n_ev < cap:
                    ev_t[n_ev] = t_ev
                    ev_kind[n_ev] = RADIAL_MIN if crossed_min else RADIAL_MAX
                    for i in range(4):
                        ev_y[n_ev, i] = yref[i]
                    n_ev += 1
                if is_target:
                    r = abs(system_integral(kind, yref, p))
                    if r > max_res:
                        max_res = r
                    for i in range(4):
                        ev_y[last, i] = yref[i]
                    return OK, t_ev, n_steps, n_rej, n_max, n_min, n_ev, max_res
        for i in range(4):
            y[i] = ynew[i]
        t = t_new
        g_prev = g_new
        r = abs(system_integral(kind, y, p))
        if r > max_res:
            max_res = r
        if not armed and abs(t - t0) > 10.0 * hmin:
            armed = True
        h = hnext
    for i in range(4):
        ev_y[last, i] = y[i]
    return OK, t, n_steps, n_rej, n_max, n_min, n_ev, max_res


@njit(cache=True, nogil=True)
def _single_step(kind, p, t, y, h, atol, rtol, hmin, hmax):
    k = np.empty((_STAGES, 4))
    ytmp = np.empty(4)
    ynew = np.empty(4)
    yerr = np.empty(4)
    status, hused, hnext, err, rej = _controlled_step(
        kind, p, t, y, h, atol, rtol, hmin, hmax, 1e-4, k, ytmp, ynew, yerr)
    return status, ynew, t + hused, hnext, _error_norm(y, ynew, yerr, atol, rtol)


# ---------------------------------------------------------------------------
# interpreted mode for arbitrary callables

_KERNELS = ("_attempt", "_error_norm", "_controlled_step", "_gfun",
            "_refine_event", "_propagate", "_single_step")


def _interpreted(rhs, integral=None):
    """Rebind the kernel sources so that ``system_rhs`` calls ``rhs``."""
    ns = dict(globals())

    def _rhs(kind, t, y0, y1, y2, y3, p):
        d = rhs(t, np.array([y0, y1, y2, y3]))
        return float(d[0]), float(d[1]), float(d[2]), float(d[3])

    def _integral(kind, y, p):
        return 0.0 if integral is None else float(integral(y))

    ns["system_rhs"] = _rhs
    ns["system_integral"] = _integral
    for name in _KERNELS:
        src = globals()[name].py_func
        ns[name] = types.FunctionType(src.__code__, ns, name, src.__defaults__)
    return ns


def _resolve(rhs, integral=None):
    if hasattr(rhs, "kind") and hasattr(rhs, "params"):
        return globals(), int(rhs.kind), np.asarray(rhs.array, dtype=np.float64)
    if not callable(rhs):
        raise TypeError("rhs must be a System or a callable f(tau, y)")
    return _interpreted(rhs, integral), -1, np.zeros(1)


def _state(y):
    arr = np.array(y, dtype=np.float64).reshape(-1)
    if arr.shape != (4,):
        raise ValueError("states have exactly four components")
    if not np.all(np.isfinite(arr)):
        raise ValueError("state has non-finite components")
    return arr


def _raise(status, t, y):
    cls, msg = _ERRORS[status]
    raise cls(f"{msg} at tau={t!r}", tau=t, state=tuple(float(v) for v in y))


def step(rhs, state, tau, h, config=IntegratorConfig()):
    """Take one accepted adaptive step.

    Parameters
    ----------
    rhs : System or callable
        Vector field.
    state : array_like, shape (4,)
    tau : float
        Current time.
    h : float
        Trial step (sign sets the direction).
    config : IntegratorConfig

    Returns
    -------
    state_new : ndarray
    tau_new : float
    h_next : float
        Proposed next step.
    error : float
        Scaled error estimate of the accepted step (at most 1).

    Raises
    ------
    StepSizeError
        If no step of magnitude at least ``h_min`` meets the tolerance.
    """
    ns, kind, p = _resolve(rhs)
    y = _state(state)
    if not (config.h_min <= abs(h) <= config.h_max):
        raise ValueError("h outside [h_min, h_max]")
    status, ynew, tnew, hnext, err = ns["_single_step"](
        kind, p, float(tau), y, float(h), config.abs_tol, config.rel_tol,
        config.h_min, config.h_max)
    if status != OK:
        _raise(status, tau, y)
    return np.array(ynew), float(tnew), float(hnext), float(err)


def _run(rhs, state0, tau0, tau1, n, config, refine_all, integral):
    ns, kind, p = _resolve(rhs, integral)
    y0 = _state(state0)
    ev_t = np.zeros(_MAX_EVENTS + 1)
    ev_y = np.zeros((_MAX_EVENTS + 1, 4))
    ev_kind = np.zeros(_MAX_EVENTS + 1, dtype=np.int64)
    tau_max = config.tau_max if math.isfinite(config.tau_max) else 1e300
    r_max = config.r_max if math.isfinite(config.r_max) else 1e300
    out = ns["_propagate"](
        kind, p, y0, float(tau0), float(tau1), int(n), config.abs_tol,
        config.rel_tol, config.h_init, config.h_min, config.h_max,
        int(config.max_steps), tau_max, r_max, bool(refine_all), ev_t, ev_y, ev_kind)
    status, t, n_steps, n_rej, n_max, n_min, n_ev, max_res = out
    y = ev_y[-1].copy()
    if status != OK:
        _raise(status, float(t), y)
    events = []
    counts = [0, 0]
    for i in range(n_ev):
        kd = int(ev_kind[i])
        counts[kd] += 1
        events.append(EventRecord(
            float(ev_t[i]), tuple(float(v) for v in ev_y[i]),
            "radial_min" if kd == RADIAL_MIN else "radial_max", counts[kd]))
    summary = TrajectorySummary(float(t), int(n_steps), int(n_rej), int(n_max),
                                int(n_min), float(max_res), tuple(events))
    return y, summary


def propagate(rhs, state0, tau0, tau1, config=IntegratorConfig(), integral=None):
    """Integrate from ``tau0`` to ``tau1`` (forward or backward).

    Parameters
    ----------
    integral : callable, optional
        First integral ``I(y)`` tracked along the arc for callables; built-in
        systems track their own.

    Returns
    -------
    state : ndarray
    summary : TrajectorySummary
    """
    return _run(rhs, state0, tau0, tau1, 0, config, False, integral)


def propagate_to_nth_min(rhs, state0, n, config=IntegratorConfig(), *,
                         tau0=0.0, refine_all=False, integral=None):
    """Integrate forward to the ``n``-th radial minimum.

    Minima are sign changes of ``g = U*U' + V*V'`` from negative to
    positive; maxima the reverse. Detection is armed once ``tau`` exceeds
    ``10*h_min`` so the trivial zero at ejection is skipped.

    Parameters
    ----------
    rhs : System or callable
    state0 : array_like, shape (4,)
    n : int
        Ordinal of the target minimum (``n >= 1``).
    config : IntegratorConfig
    refine_all : bool
        Refine every detected event, not only the target. Unrefined events
        are stamped with the end of their bracketing step.

    Returns
    -------
    event : EventRecord
    summary : TrajectorySummary

    Raises
    ------
    PropagationError, StepSizeError, EscapeError, DegenerateEventError
    """
    if int(n) < 1:
        raise ValueError("n must be at least 1")
    y, summary = _run(rhs, state0, tau0, 0.0, int(n), config, refine_all, integral)
    ev = EventRecord(summary.tau_final, tuple(float(v) for v in y), "radial_min", int(n))
    return ev, summary


def angular_momentum(state):
    """``U*V' - V*U'`` of a scaled (or Levi-Civita) state."""
    U, V, Ud, Vd = state[0], state[1], state[2], state[3]
    return U * Vd - V * Ud
