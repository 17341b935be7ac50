"""Command-line interface.

Exit status: 0 on success, 2 for invalid input, 3 for numerical failure.
"""

import argparse
import logging
import sys

import numpy as np

from . import data
from .experiments import ExperimentConfig, run_experiment
from .nullcov import CovarianceModel
from .pvalues import Budgets, build_covariance
from .scan import ScanWindow
from .simulate import SeedSpec

EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _common(p, m1=6):
    p.add_argument("--m0", type=int, default=0)
    p.add_argument("--m1", type=int, default=m1)
    p.add_argument("--seed", type=int, default=20180501)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default=None, help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrtchange", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="test a feature CSV for a recent change point")
    p.add_argument("path")
    _common(p)
    p.add_argument("--methods", default="lrt-empirical",
                   help="comma-separated subset of " + ",".join(data.METHODS) + " or 'all'")
    p.add_argument("--cov", choices=["empirical", "firstorder"], default=None,
                   help="shorthand for --methods lrt-empirical / lrt-firstorder")
    p.add_argument("--cov-file", default=None, help="cached covariance CSV from 'calibrate'")
    p.add_argument("--reps", type=int, default=10_000, help="simulation budget B")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--kappa", type=float, default=2.0)
    p.add_argument("--target", type=float, default=0.0, help="MCUSUM target value")
    p.add_argument("--baseline-end", type=int, default=None)
    p.add_argument("--whole-series", action="store_true",
                   help="standardize with all days instead of the pre-window baseline")

    p = sub.add_parser("simulate", help="write a synthetic feature CSV")
    p.add_argument("--q", type=int, default=7)
    p.add_argument("--n", type=int, default=39)
    p.add_argument("--k", type=int, default=None, help="change point (shift after day k)")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=20180501)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("calibrate", help="estimate and cache the null correlation matrix")
    _common(p)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--cov", choices=["empirical", "firstorder"], default="empirical")
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--critical", action="store_true",
                   help="also print the level-alpha threshold on Q")

    for name in ("table1", "fig1", "fig2"):
        p = sub.add_parser(name, help=f"run the {name} experiment to CSV")
        p.add_argument("--seed", type=int, default=20180501)
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--out", default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--cov-reps", type=int, default=10_000)
        p.add_argument("--tol", type=float, default=1e-4)
        if name == "table1":
            p.add_argument("--q", type=int, nargs="+", default=None)
            p.add_argument("--n", type=int, nargs="+", default=None)
            p.add_argument("--windows", nargs="+", default=None,
                           help="'0,6' and/or 'sqrt'")
        elif name == "fig1":
            p.add_argument("--p", type=float, nargs="+", default=None)
            p.add_argument("--m1", type=int, nargs="+", default=None)
            p.add_argument("--B", type=int, nargs="+", default=None)
            p.add_argument("--ref-reps", type=int, default=1_000_000)
        else:
            p.add_argument("--q", type=int, nargs="+", default=None)
            p.add_argument("--kappa", type=float, nargs="+", default=None)
            p.add_argument("--target", type=float, default=0.0)
            p.add_argument("--calib-reps", type=int, default=20_000)
    return parser


def _write(text: str, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_detect(args):
    if args.methods == "all":
        methods = list(data.METHODS)
    else:
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.cov:
        methods = ["lrt-" + args.cov] + [m for m in methods if not m.startswith("lrt-e")
                                          and not m.startswith("lrt-f")]
    cov = CovarianceModel.from_csv(args.cov_file) if args.cov_file else None
    budgets = Budgets(cov_B=args.reps, mc_B=args.reps, tol=args.tol)
    report = data.detect(args.path, ScanWindow(args.m0, args.m1), methods, budgets,
                         SeedSpec(args.seed), args.kappa, args.target,
                         args.baseline_end, args.whole_series, cov)
    report["alpha"] = args.alpha
    _write(data.format_report(report), args.out)


def _cmd_simulate(args):
    table = data.synthetic_table(args.q, args.n, SeedSpec(args.seed, args.stream), args.k, args.delta)
    if args.out:
        data.save_csv(args.out, table)
    else:
        data.write_csv(sys.stdout, table)


def _cmd_calibrate(args):
    from .mvn import critical_value

    w = ScanWindow(args.m0, args.m1)
    model = build_covariance(args.cov, args.q, args.n, w, args.reps, SeedSpec(args.seed))
    model.q = args.q
    if args.out:
        model.to_csv(args.out)
    else:
        np.savetxt(sys.stdout, model.sigma, fmt="%.6f", delimiter=",")
    if args.critical:
        b_sq = critical_value(model, args.alpha, args.q)
        print(f"critical_value_Q={b_sq:.6f} alpha={args.alpha}")


def _window_arg(s):
    if s == "sqrt":
        return "sqrt"
    m0, m1 = (int(v) for v in s.split(","))
    return (m0, m1)


def _cmd_experiment(args):
    kw = dict(experiment=args.command, master_seed=args.seed, replicates=args.reps,
              output_path=args.out, workers=args.workers, alpha=args.alpha,
              cov_B=args.cov_reps, tol=args.tol)
    if args.command == "table1":
        kw.update(qs=tuple(args.q) if args.q else None, ns=tuple(args.n) if args.n else None,
                  windows=tuple(map(_window_arg, args.windows)) if args.windows else None)
    elif args.command == "fig1":
        if args.p:
            kw["p_targets"] = tuple(args.p)
        if args.m1:
            kw["m1s"] = tuple(args.m1)
        if args.B:
            kw["B_grid"] = tuple(args.B)
        kw["ref_B"] = args.ref_reps
    else:
        kw.update(qs=tuple(args.q) if args.q else None, a_target=args.target,
                  calib_B=args.calib_reps)
        if args.kappa:
            kw["kappas"] = tuple(args.kappa)
    cfg = ExperimentConfig(**kw)
    text = run_experiment(cfg)
    if not args.out:
        sys.stdout.write(text)


COMMANDS = {"detect": _cmd_detect, "simulate": _cmd_simulate, "calibrate": _cmd_calibrate,
            "table1": _cmd_experiment, "fig1": _cmd_experiment, "fig2": _cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (data.InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
