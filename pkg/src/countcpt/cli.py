"""Command-line interface: simulate, fit, test, critval, bench.

Exit codes: 0 test ran without rejection, 3 test rejected, 1 usage error,
2 data or model error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import critval
from .cpt import DegenerateCurve, SeriesTooShort, parse_weight, run_test
from .harness import ExperimentPlan, run_level, run_power
from .io import DataFormatError, emit_report, read_series, write_series_csv
from .likelihood import NumericDegeneracy, SegmentError
from .mle import FitError, SegmentTooShort, fit_range
from .models import InvalidParameter, UnsupportedModel, parse_model
from .simulate import simulate_h0, simulate_h1

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_REJECT = 3

_DATA_ERRORS = (
    DataFormatError, InvalidParameter, UnsupportedModel, FitError,
    SegmentTooShort, SegmentError, NumericDegeneracy, SeriesTooShort,
    DegenerateCurve, ValueError, OSError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _parse_theta(text, d):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != d:
        raise ValueError(f"expected {d} parameters, got {len(vals)} in {text!r}")
    return np.asarray(vals)


def _add_common(sub):
    sub.add_argument("--model", required=True,
                     help="model descriptor, e.g. nb-ingarch:r=8 or poisson-intarch:l=5")


def build_parser():
    p = _Parser(prog="countcpt",
                description="Parameter-change tests for integer-valued time series")
    p.add_argument("--seed", type=int, default=None, help="global RNG seed override")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes for Monte Carlo work")
    p.add_argument("--cache-dir", default=None,
                   help="critical-value cache directory (or set CPT_CACHE_DIR)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a trajectory, CSV to --output")
    _add_common(s)
    s.add_argument("--theta", required=True, help="comma-separated parameters")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--burn-in", type=int, default=500)
    s.add_argument("--change-theta", default=None,
                   help="post-change parameters (enables a change)")
    s.add_argument("--change-at", type=int, default=None,
                   help="last observation index of the pre-change regime")
    s.add_argument("--emit-latent", action="store_true",
                   help="include the latent conditional means")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="maximum likelihood on an observation range")
    _add_common(s)
    s.add_argument("--input", required=True)
    s.add_argument("--column", default=None)
    s.add_argument("--from", dest="k_from", type=int, default=1)
    s.add_argument("--to", dest="k_to", type=int, default=None)
    s.add_argument("--x-init", type=float, default=None)
    s.add_argument("--output", default=None, help="write JSON here instead of stdout")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("test", help="run the parameter-change test")
    _add_common(s)
    s.add_argument("--input", required=True)
    s.add_argument("--column", default=None)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--q", default="one", help="weight: one | power:g=<gamma>")
    s.add_argument("--un", default="auto")
    s.add_argument("--vn", default="auto")
    s.add_argument("--x-init", type=float, default=None,
                   help="initial mean for every segment filter")
    s.add_argument("--output", default=None, help="report JSON path")
    s.add_argument("--curve-csv", default=None, help="statistic curve CSV path")
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("critval", help="critical values of the null limit")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--q", default="one")
    s.add_argument("--paths", type=int, default=critval.DEFAULT_PATHS)
    s.add_argument("--grid", type=int, default=critval.DEFAULT_GRID)
    s.add_argument("--table", action="store_true",
                   help="CSV rows for alpha in {0.10, 0.05, 0.025, 0.01}")
    s.set_defaults(func=cmd_critval)

    s = sub.add_parser("bench", help="size/power experiments from a plan file")
    s.add_argument("--plan", required=True, help="JSON plan file")
    s.add_argument("--output", required=True, help="results CSV")
    s.set_defaults(func=cmd_bench)
    return p


def cmd_simulate(args):
    model = parse_model(args.model)
    theta = _parse_theta(args.theta, model.d)
    seed = args.seed
    if (args.change_theta is None) != (args.change_at is None):
        raise ValueError("--change-theta and --change-at go together")
    if args.change_theta is not None:
        theta2 = _parse_theta(args.change_theta, model.d)
        traj = simulate_h1(model, theta, theta2, args.n, args.change_at,
                           burn_in=args.burn_in, seed=seed)
    else:
        traj = simulate_h0(model, theta, args.n, burn_in=args.burn_in, seed=seed)
    write_series_csv(args.output, traj.y,
                     traj.x_latent if args.emit_latent else None)
    print(f"wrote {args.n} observations to {args.output}")
    return EXIT_OK


def cmd_fit(args):
    model = parse_model(args.model)
    series = read_series(args.input, column=args.column, family=model.family)
    k_to = args.k_to if args.k_to is not None else series.n
    result = fit_range(model, series.values, args.k_from, k_to, x_init=args.x_init)
    payload = {
        "model": model.descriptor,
        "from": args.k_from,
        "to": k_to,
        "theta": [float(v) for v in result.theta],
        "loglik": result.loglik,
        "grad_inf_norm": result.grad_inf_norm,
        "iterations": result.iterations,
        "boundary_active": list(result.boundary_active),
        "converged": result.converged,
        "x_init": result.x_init,
    }
    text = json.dumps(payload, indent=2)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_test(args):
    model = parse_model(args.model)
    series = read_series(args.input, column=args.column, family=model.family)
    print(f"{series.path}: n={series.n} mean={series.mean:.3f} "
          f"variance={series.variance:.3f}")
    weight = parse_weight(args.q)
    un = args.un if args.un == "auto" else int(args.un)
    vn = args.vn if args.vn == "auto" else int(args.vn)
    y = series.values
    if args.x_init is not None:
        from .cpt import run_test_fixed_init
        report = run_test_fixed_init(
            model, y, args.x_init, alpha=args.alpha, weight=weight,
            u_n=un, v_n=vn, cache_dir=args.cache_dir,
            critval_seed=args.seed, workers=args.threads,
        )
    else:
        report = run_test(model, y, alpha=args.alpha, weight=weight, u_n=un, v_n=vn,
                          cache_dir=args.cache_dir, critval_seed=args.seed,
                          workers=args.threads)
    decision = "reject" if report.reject else "no rejection"
    print(f"statistic={report.statistic:.4f} critical_value="
          f"{report.critical_value:.4f} ({decision} at alpha={report.alpha:g}), "
          f"breakpoint estimate t_hat={report.t_hat}")
    if args.output:
        emit_report(report, args.output, curve_path=args.curve_csv)
        print(f"report written to {args.output}")
    elif args.curve_csv:
        emit_report(report, "/dev/null", curve_path=args.curve_csv)
    return EXIT_REJECT if report.reject else EXIT_OK


def cmd_critval(args):
    weight = parse_weight(args.q)
    seed = args.seed if args.seed is not None else critval.DEFAULT_SEED
    kwargs = dict(m=args.grid, n_paths=args.paths, seed=seed,
                  cache_dir=args.cache_dir,
                  workers=args.threads if args.threads else "auto")
    if args.table:
        table = critval.quantile_table(args.d, weight=weight, **kwargs)
        print("alpha,c_alpha")
        for a in sorted(table.values, reverse=True):
            print(f"{a:g},{table.values[a]:.6f}")
    else:
        c = critval.quantile(args.d, args.alpha, weight, **kwargs)
        print(f"{c:.6f}")
    return EXIT_OK


def _plan_from_dict(obj, seed_override):
    fields = dict(
        model=obj["model"],
        theta0=tuple(obj["theta0"]),
        theta1=tuple(obj["theta1"]) if obj.get("theta1") else None,
        t_star_frac=obj.get("t_star_frac", 0.5),
        n_list=tuple(obj.get("n", (500, 1000))),
        replications=obj.get("replications", 100),
        alpha=obj.get("alpha", 0.05),
        seed=seed_override if seed_override is not None else obj.get("seed", 0),
        weight=obj.get("q", "one"),
        burn_in=obj.get("burn_in", 500),
        label=obj.get("label", ""),
    )
    return ExperimentPlan(**fields)


def cmd_bench(args):
    with open(args.plan, encoding="utf-8") as fh:
        spec = json.load(fh)
    scenarios = spec["scenarios"] if isinstance(spec, dict) and "scenarios" in spec else [spec]
    rows = []
    for obj in scenarios:
        plan = _plan_from_dict(obj, args.seed)
        runner = run_power if plan.theta1 is not None else run_level
        result = runner(plan, workers=args.threads, cache_dir=args.cache_dir)
        for sc in result.scenarios:
            rows.append([
                sc.label, sc.n, plan.model, f"{sc.rate:.4f}",
                f"{sc.wilson_lo:.4f}", f"{sc.wilson_hi:.4f}",
                "" if sc.median_abs_break_error is None
                else f"{sc.median_abs_break_error:g}",
                f"{sc.seconds:.2f}",
            ])
            print(f"{sc.label} n={sc.n}: rate={sc.rate:.3f} "
                  f"[{sc.wilson_lo:.3f}, {sc.wilson_hi:.3f}] in {sc.seconds:.1f}s")
    import csv as _csv
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["scenario", "n", "r_or_model", "rate", "wilson_lo",
                         "wilson_hi", "median_abs_that_err", "seconds"])
        writer.writerows(rows)
    print(f"results written to {args.output}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        sys.stderr.write(f"countcpt: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
