"""Command-line harness: ``gslaplace {coeffs,scan,price,errors,steps}``.

Every subcommand writes CSV (to stdout or ``--out``). Scientific outcomes
live in the CSV; the exit status is 0 whenever the command ran and 2 for
usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .asynchronous import ActivationPolicy, DelayModel, format_trace, run_async
from .bsm import MarketParams, black_scholes_call, payoff, transform_params
from .direct import direct_solve, price_at
from .exceptions import InvalidArgument
from .freq_solver import GridFunction, SpatialGrid
from .stehfest import check_p, compute_weights
from .sync import IterationConfig, Status, iterate

logger = logging.getLogger("gslaplace")

DEFAULTS = {
    "sigma": 0.3,
    "r": 0.05,
    "E": 50.0,
    "T": "1",
    "p": "6",
    "grid_n": 1199,
    "x_max": 6.0,
    "threshold": 1e-3,
    "max_iters": 1000,
    "seed": 0,
    "seeds": 1,
    "delay_D": 1,
    "late": 0.03,
    "window_W": 0,
    "mode": "sync",
    "linear": False,
    "concurrent": False,
}

REFERENCE_RATIOS = (0.4, 1.0, 1.2, 2.0)
ACCURACY = 1e-3
DEFAULT_ROWS = ((60.0, 50.0), (100.0, 50.0), (20.0, 30.0), (20.0, 50.0))

HEADERS = {
    "coeffs": ["i", "omega_exact", "omega_float"],
    "scan": [
        "method", "T", "p", "status", "error", "iterations",
        "seeds_converged", "wall_time", "note",
    ],
    "price": [
        "S", "E", "V_sync", "V_async", "eps_abs", "eps_rel",
        "sync_status", "async_status",
    ],
    "errors": ["T", "p", "S", "E", "V", "V_exact", "abs_error", "rel_error"],
    "steps": [
        "step", "t_start", "t_end", "status", "iterations",
        "residual", "residual_history", "S", "E", "V",
    ],
}

EPILOG = """\
CSV columns
  coeffs: {coeffs}
  scan:   {scan}
  price:  {price}
  errors: {errors}
  steps:  {steps}

scan statuses: convergent | inaccurate | divergent | max-iters | error.
'error' in scan is the norm-wise relative error max|V - V_ref| / max|V_ref|
over S/E in {{0.4, 1, 1.2, 2}}; V_ref is the closed-form Black-Scholes price
in linear mode, else a synchronous p=8 solve on a twice finer grid (cached
in --ref-cache). 'inaccurate' means converged but error > 1e-3.

Async trace files (--trace): a '#' header line, then one tab-separated line
per worker activation:  step  worker  k  residual  versions  rho
where versions and rho are comma-separated per sending worker; rho[j] is
the last global step at which the value read from worker j was current.

Config precedence: command-line flags > --config JSON file > defaults.
""".format(**{k: ",".join(v) for k, v in HEADERS.items()})


def parse_list(text, cast=float):
    return [cast(v) for v in str(text).split(",") if v.strip()]


def parse_p_range(text):
    """``"4:2:16"`` (start:step:stop, inclusive), ``"8:18"`` (step 2), or ``"4,6,8"``."""
    text = str(text)
    if ":" in text:
        parts = [int(v) for v in text.split(":")]
        if len(parts) == 2:
            start, step, stop = parts[0], 2, parts[1]
        elif len(parts) == 3:
            start, step, stop = parts
        else:
            raise InvalidArgument(f"bad p range {text!r}")
        if step <= 0:
            raise InvalidArgument("p range step must be positive")
        values = list(range(start, stop + 1, step))
    else:
        values = parse_list(text, int)
    return [check_p(p) for p in values]


def _options(parser):
    g = parser.add_argument_group("model")
    g.add_argument("--sigma", type=float)
    g.add_argument("--r", type=float)
    g.add_argument("--E", type=float, help="strike (default 50)")
    g.add_argument("--T", help="maturity in years; scan/errors accept a comma list")
    g.add_argument("--p", help="even node count; scan/errors accept ranges like 4:2:16")
    g.add_argument("--linear", action="store_true", default=None, help="constant volatility")
    g = parser.add_argument_group("discretisation and iteration")
    g.add_argument("--grid-n", type=int, dest="grid_n")
    g.add_argument("--x-max", type=float, dest="x_max")
    g.add_argument("--threshold", type=float)
    g.add_argument("--max-iters", type=int, dest="max_iters")
    g = parser.add_argument_group("asynchronous schedule")
    g.add_argument("--mode", "--method", dest="mode", choices=["direct", "sync", "async"])
    g.add_argument("--sim", dest="concurrent", action="store_false", default=None)
    g.add_argument("--concurrent", dest="concurrent", action="store_true", default=None)
    g.add_argument("--seed", type=int)
    g.add_argument("--seeds", type=int, help="number of seeds (seed, seed+1, ...)")
    g.add_argument("--delay-D", type=int, dest="delay_D", help="max message delay in steps")
    g.add_argument("--late", type=float, help="probability a message is delayed")
    g.add_argument("--window-W", type=int, dest="window_W",
                   help="one worker per step, each within every W steps (0: all active)")
    g = parser.add_argument_group("output")
    g.add_argument("--out", help="CSV destination (default stdout)")
    g.add_argument("--config", help="JSON file with option defaults")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for scan")
    g.add_argument("--ref-cache", dest="ref_cache", help="reference price cache (JSON)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gslaplace",
        description="Gaver-Stehfest Laplace solvers for the quasilinear Black-Scholes equation.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "coeffs": "print the Stehfest weights for --p",
        "scan": "convergence zone over --T x --p",
        "price": "synchronous vs asynchronous prices",
        "errors": "direct-method error vs closed form (linear)",
        "steps": "successive time levels",
    }
    for name, text in helps.items():
        p = sub.add_parser(
            name, help=text, description=text, epilog=EPILOG,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        _options(p)
        if name == "price":
            p.add_argument("--S", dest="S_list", help="comma list of spot prices")
            p.add_argument("--E-list", dest="E_list", help="comma list of strikes, paired with --S")
            p.add_argument("--trace", help="write the async trace here")
        if name == "steps":
            p.add_argument("--delta-T", type=float, default=None, dest="delta_T")
            p.add_argument("--n", type=int, default=None)
            p.add_argument("--S", dest="S_list", help="spot price to report (default 60)")
            p.add_argument("--trace", help="write per-step async traces here")
    return parser


def resolve(args):
    """Fill unset options from the config file, then the built-in defaults."""
    config = {}
    if args.config:
        with open(args.config) as fh:
            config = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
    for key, default in DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, config.get(key, default))
    for key in ("delta_T", "n"):
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, config.get(key, {"delta_T": 0.1, "n": 10}[key]))
    return args


class Context:
    """Resolved options plus helpers shared by the subcommands."""

    def __init__(self, args):
        self.args = args
        self.grid = SpatialGrid(-args.x_max, args.x_max, args.grid_n)
        self.cfg = IterationConfig(threshold=args.threshold, max_iters=args.max_iters)

    def market(self, T=None, E=None):
        a = self.args
        return MarketParams(
            sigma=a.sigma, r=a.r, E=a.E if E is None else E,
            T=float(parse_list(a.T)[0]) if T is None else T,
        )

    def schedule(self, seed):
        a = self.args
        delay = DelayModel.bounded(seed, a.delay_D, a.late) if a.delay_D else DelayModel.zero()
        activation = (
            ActivationPolicy.window_fair(seed, a.window_W)
            if a.window_W
            else ActivationPolicy.all_active()
        )
        return delay, activation

    def solve(self, method, m, p, seed=0, grid=None, linear=None):
        """``(u_values, report_or_None, trace_or_None)`` priced today."""
        grid = grid or self.grid
        linear = self.args.linear if linear is None else linear
        tp = transform_params(m)
        u0 = payoff(grid.x)
        if method == "direct":
            return direct_solve(m, grid, p).u.values, None, None
        if method == "sync":
            u, rep = iterate(grid, p, tp.tau_max, tp.kappa, u0, self.cfg, linear=linear)
            return u, rep, None
        delay, activation = self.schedule(seed)
        return run_async(
            grid, p, tp.tau_max, tp.kappa, u0, self.cfg, linear=linear,
            mode="concurrent" if self.args.concurrent else "simulated",
            delay=delay, activation=activation,
        )

    def prices(self, u, m, grid=None, ratios=REFERENCE_RATIOS):
        gf = GridFunction(grid or self.grid, u)
        return np.array([price_at(gf, k * m.E, m) for k in ratios])

    def reference(self, T):
        """Reference prices at the reference points for maturity ``T``."""
        m = self.market(T=T)
        if self.args.linear or self.args.mode == "direct":
            return np.array([black_scholes_call(k * m.E, m.E, m.r, m.sigma, m.T) for k in REFERENCE_RATIOS])
        key = json.dumps(
            [m.sigma, m.r, m.E, m.T, self.grid.x_min, self.grid.x_max, self.grid.N, self.cfg.threshold]
        )
        path = Path(self.args.ref_cache or _default_cache())
        cache = {}
        if path.exists():
            try:
                cache = json.loads(path.read_text())
            except (OSError, ValueError):
                cache = {}
        if key in cache:
            return np.array(cache[key])
        fine = self.grid.refined(2)
        tp = transform_params(m)
        u, rep = iterate(fine, 8, tp.tau_max, tp.kappa, payoff(fine.x), self.cfg)
        if not rep.converged:
            raise RuntimeError(f"reference solve did not converge for T={T}")
        ref = self.prices(u, m, fine)
        cache[key] = ref.tolist()
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(cache, indent=1))
        except OSError as exc:
            logger.warning("could not write reference cache %s: %s", path, exc)
        return ref


def _default_cache():
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return os.path.join(base, "gslaplace", "references.json")


def relative_error(V, ref):
    return float(np.max(np.abs(V - ref)) / np.max(np.abs(ref)))


def classify(report, error):
    if report is not None:
        if report.status is Status.DIVERGED:
            return "divergent"
        if report.status is Status.MAX_ITERS:
            return "max-iters"
    if not np.isfinite(error):
        return "divergent"
    return "convergent" if error <= ACCURACY else "inaccurate"


def scan_cell(args, T, p):
    ctx = Context(args)
    method = args.mode
    m = ctx.market(T=T)
    seeds = range(args.seed, args.seed + (args.seeds if method == "async" else 1))
    start = time.perf_counter()
    statuses, errors, iters = [], [], []
    note = ""
    try:
        ref = ctx.reference(T)
        for seed in seeds:
            u, rep, _ = ctx.solve(method, m, p, seed)
            with np.errstate(all="ignore"):
                err = relative_error(ctx.prices(u, m), ref) if np.all(np.isfinite(u)) else float("inf")
            statuses.append(classify(rep, err))
            errors.append(err)
            iters.append(rep.iterations if rep else 1)
    except Exception as exc:  # recorded in-row, the scan goes on
        note = f"{type(exc).__name__}: {exc}"
        statuses.append("error")
    wall = time.perf_counter() - start
    n_conv = statuses.count("convergent")
    if all(s == "convergent" for s in statuses):
        status = "convergent"
    else:
        bad = [s for s in statuses if s != "convergent"]
        status = max(set(bad), key=lambda s: (bad.count(s), s))
    return {
        "method": method,
        "T": T,
        "p": p,
        "status": status,
        "error": max(errors) if errors else "",
        "iterations": max(iters) if iters else "",
        "seeds_converged": f"{n_conv}/{len(statuses)}",
        "wall_time": round(wall, 4),
        "note": note,
    }


def cmd_coeffs(ctx, writer):
    p = check_p(int(ctx.args.p))
    w = compute_weights(p)
    for i, (exact, flt) in enumerate(zip(w.weights_exact, w.weights_float), 1):
        writer.writerow({"i": i, "omega_exact": str(exact), "omega_float": repr(float(flt))})


def cmd_scan(ctx, writer):
    a = ctx.args
    cells = [(T, p) for T in parse_list(a.T) for p in parse_p_range(a.p)]
    if a.jobs > 1:
        with ProcessPoolExecutor(a.jobs) as pool:
            rows = pool.map(scan_cell, [a] * len(cells), *zip(*cells))
            for row in rows:
                writer.writerow(row)
    else:
        for T, p in cells:
            writer.writerow(scan_cell(a, T, p))


def cmd_price(ctx, writer):
    a = ctx.args
    if a.S_list:
        S = parse_list(a.S_list)
        E = parse_list(a.E_list) if a.E_list else [a.E] * len(S)
        if len(E) != len(S):
            raise InvalidArgument("--S and --E-list must have the same length")
        pairs = list(zip(S, E))
    else:
        pairs = list(DEFAULT_ROWS)
    p = check_p(int(a.p))
    m = ctx.market()
    u_s, rep_s, _ = ctx.solve("sync", m, p)
    u_a, rep_a, trace = ctx.solve("async", m, p, a.seed)
    if a.trace and trace is not None:
        Path(a.trace).write_text("\n".join(format_trace(trace)) + "\n")
    for S, E in pairs:
        mE = ctx.market(E=E)
        with np.errstate(all="ignore"):
            vs = price_at(GridFunction(ctx.grid, u_s), S, mE)
            va = price_at(GridFunction(ctx.grid, u_a), S, mE)
        eps = abs(vs - va)
        writer.writerow({
            "S": S, "E": E, "V_sync": repr(vs), "V_async": repr(va),
            "eps_abs": repr(eps), "eps_rel": repr(eps / vs) if vs else "",
            "sync_status": rep_s.status.value, "async_status": rep_a.status.value,
        })


def cmd_errors(ctx, writer):
    a = ctx.args
    for T in parse_list(a.T):
        m = ctx.market(T=T)
        for p in parse_p_range(a.p):
            u = direct_solve(m, ctx.grid, p).u
            for k in REFERENCE_RATIOS:
                S = k * m.E
                V = price_at(u, S, m)
                exact = black_scholes_call(S, m.E, m.r, m.sigma, m.T)
                err = abs(V - exact)
                writer.writerow({
                    "T": T, "p": p, "S": S, "E": m.E, "V": repr(V), "V_exact": repr(exact),
                    "abs_error": repr(err), "rel_error": repr(err / exact),
                })


def cmd_steps(ctx, writer):
    a = ctx.args
    p = check_p(int(a.p))
    m = ctx.market()
    S = parse_list(a.S_list)[0] if a.S_list else 60.0
    method = "async" if a.mode == "async" else "sync"
    opts = None
    if method == "async":
        delay, activation = ctx.schedule(a.seed)
        opts = {"delay": delay, "activation": activation,
                "mode": "concurrent" if a.concurrent else "simulated"}
    # march one level at a time so each row can carry the price at its end
    grid, tp = ctx.grid, transform_params(m)
    dtau = m.sigma**2 * a.delta_T / 2.0
    u = payoff(grid.x)
    trace_lines = []
    for step in range(a.n):
        if method == "sync":
            u, rep = iterate(grid, p, dtau, tp.kappa, u, ctx.cfg, linear=a.linear, tau0=step * dtau)
        else:
            u, rep, trace = run_async(grid, p, dtau, tp.kappa, u, ctx.cfg, linear=a.linear,
                                      tau0=step * dtau, **opts)
            trace_lines += [f"# level {step + 1}"] + format_trace(trace)
        with np.errstate(all="ignore"):
            V = price_at(GridFunction(grid, u), S, m) if np.all(np.isfinite(u)) else float("nan")
        writer.writerow({
            "step": step + 1,
            "t_start": round(step * a.delta_T, 12),
            "t_end": round((step + 1) * a.delta_T, 12),
            "status": rep.status.value,
            "iterations": rep.iterations,
            "residual": repr(rep.residual),
            "residual_history": ";".join(f"{r:.6g}" for r in rep.residual_history),
            "S": S, "E": m.E, "V": repr(V),
        })
        if rep.status is Status.DIVERGED:
            break
    if a.trace and trace_lines:
        Path(a.trace).write_text("\n".join(trace_lines) + "\n")


COMMANDS = {
    "coeffs": cmd_coeffs,
    "scan": cmd_scan,
    "price": cmd_price,
    "errors": cmd_errors,
    "steps": cmd_steps,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        resolve(args)
        ctx = Context(args)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=HEADERS[args.command], lineterminator="\n")
        writer.writeheader()
        COMMANDS[args.command](ctx, writer)
        if args.out:
            with open(args.out, "w", newline="") as fh:
                fh.write(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())
    except (InvalidArgument, OSError, json.JSONDecodeError) as exc:
        parser.error(str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
