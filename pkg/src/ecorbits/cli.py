"""Command-line interface.

Every subcommand writes a data file (CSV or JSON) to ``--out`` or standard
output. With ``--out`` a ``<out>.manifest.json`` sidecar records the command,
parameters, tolerances, code version and wall time. Relative ``--out`` paths
are resolved against ``$ECORBITS_OUTPUT_DIR`` when it is set.

Exit status is 0 when every requested computation is certified, 1 on a
numeric failure (structured JSON on standard error), 2 on usage errors and 3
when results were written but some are uncertified.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from . import analytic
from .continuation import (ContinuationConfig, continue_families, detect_bifurcations,
                           detect_bifurcations_params, diagram)
from .dynamics import DomainError, Params, cl1
from .ecfinder import _STATUS, FinderConfig, find_roots_detailed, scan
from .hill import (K_L, HillParams, detect_periodic_ec, hill_bifurcations, hill_k_hat)
from .integrator import IntegratorConfig

__all__ = ["RunManifest", "build_parser", "main", "OUTPUT_DIR_ENV"]

OUTPUT_DIR_ENV = "ECORBITS_OUTPUT_DIR"


class UsageError(ValueError):
    """Invalid parameter combination."""


@dataclass(frozen=True)
class RunManifest:
    """Provenance of one output file."""

    command: str
    parameters: dict
    grid: dict
    tolerances: dict
    version: str = __version__
    wall_time: float = 0.0
    certified: bool = True
    warnings: tuple = field(default_factory=tuple)

    def to_json(self):
        d = asdict(self)
        d["warnings"] = list(self.warnings)
        return json.dumps(d, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def fmt(x):
    """17 significant digits; round-trips every double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _num(x):
    """JSON-safe float (``None`` for non-finite values)."""
    x = float(x)
    return x if math.isfinite(x) else None


# ---------------------------------------------------------------------------
# output


def _resolve(path):
    if path is None or path == "-":
        return None
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        path = os.path.join(base, path)
    return path


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _emit(args, text, manifest):
    path = _resolve(args.out)
    if path is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    with open(path + ".manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest.to_json() + "\n")


# ---------------------------------------------------------------------------
# configuration


def _integrator(args):
    return IntegratorConfig(abs_tol=args.tol, rel_tol=args.tol)


def _finder(args, reduced=False):
    return FinderConfig(integrator=_integrator(args), grid_size=args.grid,
                        jobs=args.jobs, reduced=reduced)


def _cont(args, reduced=False):
    return ContinuationConfig(finder=_finder(args, reduced), sweep_step=args.step)


def _tolerances(args):
    return {"abs_tol": args.tol, "rel_tol": args.tol}


def _params(args):
    if args.hill:
        if args.K is None:
            raise UsageError("--K is required")
        return HillParams(args.n, args.K)
    if args.mu is None:
        raise UsageError("--mu is required")
    if (args.C is None) == (args.K is None):
        raise UsageError("give exactly one of --C and --K")
    if args.C is not None:
        return Params(args.mu, args.n, args.C)
    return Params.from_K(args.mu, args.n, args.K)


def _energy_fields(p):
    return {"mu": p.mu, "n": p.n, "C": _num(p.C), "K": p.K}


def _orbit_json(o):
    d = asdict(o)
    for k, v in d.items():
        if isinstance(v, float):
            d[k] = _num(v)
    return d


def _event_json(ev):
    return {
        "C_bif": _num(ev.C_bif), "K_bif": _num(ev.K_bif), "kind": ev.kind,
        "theta0_at": ev.theta0_at, "n": ev.n, "mu": ev.mu,
        "count_before": ev.count_before, "count_after": ev.count_after,
        "width": ev.width, "roots_at": list(ev.roots_at), "window": list(ev.window),
    }


# ---------------------------------------------------------------------------
# commands


def cmd_scan(args):
    p = _params(args)
    samples = scan(p, args.grid, _finder(args))
    rows = [(s.theta0, s.M, s.tau_star, s.r_min, s.status) for s in samples]
    ok = all(s.status == "ok" for s in samples)
    text = _csv_text(["theta0", "M", "tau_star", "r_min", "status"], rows)
    return text, _energy_fields(p), {"theta": args.grid}, ok, None


def cmd_find(args):
    p = _params(args)
    res = find_roots_detailed(p, _finder(args, reduced=getattr(args, "reduced", False)))
    out = [_orbit_json(o) for o in res.roots]
    ok = not res.rejected and res.failed_samples == 0
    grid = {"theta": res.grid_size}
    return _json_text(out), _energy_fields(p), grid, ok, None


def cmd_continue(args):
    p = _params(args)
    branches = continue_families(p, args.end, _cont(args))
    name = p.energy_name
    rows = []
    for b in branches:
        for q in b.points:
            rows.append((b.label, b.m_index, q.energy, q.theta0, q.tau_star,
                         q.collision_residual, q.momentum_residual))
    header = ["family", "m_index", name, "theta0", "tau_star",
              "collision_residual", "momentum_residual"]
    terminated = {b.label: b.terminated for b in branches if b.terminated}
    params = dict(_energy_fields(p), end=args.end, terminated=terminated)
    return _csv_text(header, rows), params, {"theta": args.grid}, not terminated, None


def _bif_json(res, params):
    return {
        "energy": res.energy_name,
        f"{res.energy_name}_hat": res.hat,
        "events": [_event_json(ev) for ev in res.events],
        "sweep": [[e, c] for e, c in res.sweep],
        "parameters": params,
    }


def cmd_bifurcate(args):
    lo = cl1(args.mu) if args.c_min == "auto" else float(args.c_min)
    res = detect_bifurcations(args.mu, args.n, (lo, args.c_max), _cont(args))
    params = {"mu": args.mu, "n": args.n, "C_min": lo, "C_max": args.c_max}
    return _json_text(_bif_json(res, params)), params, {"theta": args.grid}, True, None


def _diagram_out(d, energy_name):
    header = [energy_name] + [fmt(t) for t in d.theta0]
    rows = [[float(e)] + [float(m) for m in row] for e, row in zip(d.energy, d.M)]
    ok = bool(np.all(d.status == 0))
    meta = dict(d.metadata)
    meta["status"] = d.status.tolist()
    meta["status_codes"] = list(_STATUS)
    return _csv_text(header, rows), meta, ok


def cmd_diagram(args):
    eg = np.linspace(args.c_min, args.c_max, args.c_steps)
    d = diagram(args.mu, args.n, args.theta_grid, eg, _cont(args))
    text, meta, ok = _diagram_out(d, "C")
    params = {"mu": args.mu, "n": args.n, "C_min": args.c_min, "C_max": args.c_max}
    grid = {"theta": args.theta_grid, "energy": args.c_steps}
    return text, params, grid, ok, meta


def cmd_hill(args):
    args.hill = True
    action = args.action
    if action == "scan":
        return cmd_scan(args)
    if action == "find":
        return cmd_find(args)
    if action == "continue":
        return cmd_continue(args)
    if action == "bifurcate":
        hi = max(1.5 * (2.0 * args.n) ** (2.0 / 3.0), 1.5 * K_L) if args.k_max is None else args.k_max
        lo = K_L if args.k_min is None else args.k_min
        res = hill_bifurcations(args.n, (hi, lo), _cont(args, args.reduced))
        params = {"n": args.n, "K_min": lo, "K_max": hi}
        return _json_text(_bif_json(res, params)), params, {"theta": args.grid}, True, None
    if action == "k-hat":
        k = hill_k_hat(args.n, _cont(args, args.reduced))
        params = {"n": args.n}
        ref = analytic.hill_scaling_curves(1, args.n)
        out = {"n": args.n, "K_hat": k, "reference": ref}
        return _json_text(out), params, {"theta": args.grid}, k is not None, None
    if action == "periodic":
        hi = max(1.5 * (2.0 * args.n) ** (2.0 / 3.0), 1.5 * K_L) if args.k_max is None else args.k_max
        lo = K_L if args.k_min is None else args.k_min
        found = detect_periodic_ec(args.n, _cont(args, args.reduced), K_range=(hi, lo))
        out = [{"K": f.K, "theta0": f.theta0, "families": list(f.families), "kind": f.kind,
                "symmetry": f.symmetry, "theta1": f.theta1,
                "event": None if f.event is None else f.event.kind} for f in found]
        params = {"n": args.n, "K_min": lo, "K_max": hi}
        return _json_text(out), params, {"theta": args.grid}, True, None
    if action == "diagram":
        eg = np.linspace(args.k_min, args.k_max, args.k_steps)
        d = diagram(1.0, args.n, args.theta_grid, eg, _cont(args), params=HillParams(args.n, eg[-1]))
        text, meta, ok = _diagram_out(d, "K")
        params = {"n": args.n, "K_min": args.k_min, "K_max": args.k_max}
        return text, params, {"theta": args.theta_grid, "energy": args.k_steps}, ok, meta
    raise UsageError(f"unknown hill action {action!r}")


def _thetas(args):
    return [float(t) for t in args.theta]


def cmd_analytic(args):
    op = args.op
    params = {k: v for k, v in vars(args).items()
              if k in ("n", "mu", "eps", "theta", "order", "xi", "T", "tau", "p")}
    if op == "momentum":
        out = [{"theta0": t, "M": analytic.momentum_series(args.n, t, args.eps, args.mu, args.order)}
               for t in _thetas(args)]
    elif op == "tau-star":
        out = [{"theta0": t, "tau_star": analytic.tau_star_series(args.n, t, args.eps, args.mu, args.order)}
               for t in _thetas(args)]
    elif op == "state":
        out = [{"theta0": t, "state": list(analytic.series_state(args.tau, t, args.eps, args.mu, args.order))}
               for t in _thetas(args)]
    elif op == "roots":
        pred = analytic.predicted_roots(args.n, args.eps, args.mu, args.order)
        out = {"roots": list(pred.roots), "seeds_unresolved": list(pred.seeds_unresolved),
               "degenerate": pred.degenerate}
    elif op == "kepler":
        out = []
        for t in _thetas(args):
            st, tt = analytic.kepler_lc_ejection(args.n, t, args.xi, args.T)
            out.append({"theta0": t, "state": list(st.as_array()), "t": tt})
    elif op == "fundamental":
        out = [{"theta0": t, "X": analytic.fundamental_matrix_kepler(args.n, t, args.xi, args.T).tolist()}
               for t in _thetas(args)]
    elif op == "scaling":
        out = {"p": args.p, "n": args.n, "K": analytic.hill_scaling_curves(args.p, args.n)}
    else:
        raise UsageError(f"unknown analytic operation {op!r}")
    return _json_text(out), params, {}, True, None


# ---------------------------------------------------------------------------
# parser


def _common(p, grid=1024):
    p.add_argument("--grid", type=int, default=grid, help="angle grid size")
    p.add_argument("--tol", type=float, default=1e-12, help="integrator tolerance")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker threads (never changes results)")
    p.add_argument("--step", type=float, default=0.01, help="energy sweep step")
    p.add_argument("--out", default=None, help="output file (default: standard output)")


def _energy(p):
    p.add_argument("--mu", type=float)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--C", type=float)
    g.add_argument("--K", type=float)
    p.add_argument("--n", type=int, required=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="ecorbits",
                                     description="Ejection-collision orbits of the restricted and Hill problems.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="M over a uniform angle grid (CSV)")
    _energy(p)
    _common(p)
    p.set_defaults(func=cmd_scan, hill=False)

    p = sub.add_parser("find", help="certified n-EC roots (JSON)")
    _energy(p)
    _common(p)
    p.set_defaults(func=cmd_find, hill=False)

    p = sub.add_parser("continue", help="continue the four families (CSV)")
    _energy(p)
    p.add_argument("--end", type=float, required=True, help="final energy")
    _common(p)
    p.set_defaults(func=cmd_continue, hill=False)

    p = sub.add_parser("bifurcate", help="bifurcation events and C_hat (JSON)")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c-min", default="auto", help="lower C or 'auto' for C_L1")
    p.add_argument("--c-max", type=float, default=8.0)
    _common(p)
    p.set_defaults(func=cmd_bifurcate)

    p = sub.add_parser("diagram", help="dense M matrix over (C, theta0) (CSV plus metadata)")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c-min", type=float, required=True)
    p.add_argument("--c-max", type=float, required=True)
    p.add_argument("--c-steps", type=int, default=50)
    p.add_argument("--theta-grid", type=int, default=256)
    _common(p)
    p.set_defaults(func=cmd_diagram)

    p = sub.add_parser("hill", help="Hill problem runs (energy K)")
    p.add_argument("action", choices=["scan", "find", "continue", "bifurcate", "k-hat",
                                      "periodic", "diagram"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--K", type=float)
    p.add_argument("--end", type=float, help="final K for continue")
    p.add_argument("--k-min", type=float)
    p.add_argument("--k-max", type=float)
    p.add_argument("--k-steps", type=int, default=50)
    p.add_argument("--theta-grid", type=int, default=256)
    p.add_argument("--reduced", action="store_true", help="scan [0, pi/2) only")
    _common(p)
    p.set_defaults(func=cmd_hill, mu=1.0, C=None)

    p = sub.add_parser("analytic", help="series and closed-form evaluations (JSON)")
    p.add_argument("op", choices=["momentum", "tau-star", "state", "roots", "kepler",
                                  "fundamental", "scaling"])
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--theta", type=float, nargs="+", default=[0.0])
    p.add_argument("--order", type=int, default=10)
    p.add_argument("--xi", type=float, default=0.2)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analytic)
    return parser


def _check(args):
    if getattr(args, "jobs", 1) < 1:
        raise UsageError("--jobs must be positive")
    if getattr(args, "grid", 16) < 16:
        raise UsageError("--grid must be at least 16")
    if args.command == "hill":
        need = {"scan": ["K"], "find": ["K"], "continue": ["K", "end"],
                "diagram": ["k_min", "k_max"]}.get(args.action, [])
        for k in need:
            if getattr(args, k) is None:
                raise UsageError(f"hill {args.action} needs --{k.replace('_', '-')}")
    if args.command == "bifurcate" and args.c_min != "auto":
        try:
            float(args.c_min)
        except ValueError:
            raise UsageError("--c-min must be a number or 'auto'") from None


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    command = " ".join(["ecorbits"] + list(sys.argv[1:] if argv is None else argv))
    try:
        _check(args)
    except UsageError as exc:
        parser.error(str(exc))
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            text, params, grid, ok, meta = args.func(args)
    except (UsageError, DomainError) as exc:
        parser.error(str(exc))
    except Exception as exc:  # numeric failures surface as structured JSON
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(err) + "\n")
        return 1
    msgs = tuple(str(w.message) for w in caught)
    for m in msgs:
        sys.stderr.write(json.dumps({"warning": m}) + "\n")
    tol = _tolerances(args) if hasattr(args, "tol") else {}
    manifest = RunManifest(command, params, grid, tol, __version__,
                           time.perf_counter() - t0, bool(ok), msgs)
    _emit(args, text, manifest)
    if meta is not None and _resolve(args.out) is not None:
        root, _ = os.path.splitext(_resolve(args.out))
        with open(root + ".json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_json_text(meta))
    return 0 if ok else 3


if __name__ == "__main__":
    sys.exit(main())
