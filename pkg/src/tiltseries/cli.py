"""Command-line entry point.

Three subcommands drive the toolkit: ``fit`` (one model on one CSV),
``simulate`` (series generation or a full Monte Carlo experiment), and
``pit`` (calibration diagnostics from a stored fit or a fresh one).

Exit codes: 0 success, 1 input or usage error, 2 non-convergence.
"""

import argparse
import os
import sys

import numpy as np

from . import io as tsio
from .data import MeanModelSpec, ParamBounds
from .errors import NonConvergenceError, TiltseriesError

METHODS = ("poisson", "negbin", "semiparametric")


class _Parser(argparse.ArgumentParser):
    # usage problems are input errors: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _lag_list(text):
    if not text:
        return ()
    try:
        lags = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lag list {text!r}")
    if any(v < 1 for v in lags):
        raise argparse.ArgumentTypeError("lags must be positive")
    return lags


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",")) if text else ()
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}")


def _method_list(text):
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {m!r}")
    return methods


def _add_data_options(p):
    p.add_argument("--input", help="CSV with a 'y' column")
    p.add_argument("--design", choices=("polio", "kingscross"),
                   help="generate this named covariate design from the "
                        "series length (only 'y' is read)")
    p.add_argument("--no-intercept", action="store_true",
                   help="do not prepend an intercept column")


def _add_model_options(p):
    p.add_argument("--method", choices=METHODS, default="poisson")
    p.add_argument("--ar", type=_lag_list, default=(),
                   help="autoregressive lags, comma separated")
    p.add_argument("--ma", type=_lag_list, default=(),
                   help="moving-average lags, comma separated")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                   help="residual scaling exponent (0.5 = Pearson)")
    p.add_argument("--beta-abs", type=float, default=None,
                   help="box half-width for regression coefficients")
    p.add_argument("--arma-abs", type=float, default=None,
                   help="box half-width for ARMA coefficients")
    p.add_argument("--gradient", choices=("adjoint", "numeric"),
                   default="adjoint",
                   help="semiparametric gradient implementation")


def _bounds(args):
    kw = {}
    if getattr(args, "beta_abs", None) is not None:
        kw["beta_abs"] = args.beta_abs
    if getattr(args, "arma_abs", None) is not None:
        kw["arma_abs"] = args.arma_abs
    return ParamBounds(**kw) if kw else None


def build_parser():
    root = _Parser(prog="tiltseries",
                   description="Count time-series fitting: parametric and "
                               "semiparametric conditional models")
    root.add_argument("--threads", type=int,
                      default=int(os.environ.get("TILTSERIES_THREADS", "1")),
                      help="worker-process cap for replicated experiments "
                           "(env TILTSERIES_THREADS)")
    sub = root.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit one model to one series")
    _add_data_options(fit)
    _add_model_options(fit)
    fit.add_argument("--infer", action="store_true",
                     help="add per-parameter likelihood-ratio inference "
                          "(se_eq and confidence intervals)")
    fit.add_argument("--level", type=float, default=0.95)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", default="fit_report",
                     help="output prefix (.txt and .json)")

    sim = sub.add_parser("simulate",
                         help="generate series or run a replicated study")
    sim.add_argument("--model", required=True,
                     choices=("M1", "M1p", "M1pp", "M2", "M3"))
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--burn-in", type=int, default=100)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--reps", type=int, default=None,
                     help="replication count; omit to emit one series CSV")
    sim.add_argument("--fit", type=_method_list, default=("poisson",),
                     help="comma-separated fitting methods for --reps mode")
    sim.add_argument("--se-params", type=_int_list, default=None,
                     help="stacked indices getting equivalent-se intervals "
                          "(semiparametric only; default all)")
    sim.add_argument("--level", type=float, default=0.95)
    sim.add_argument("--gradient", choices=("adjoint", "numeric"),
                     default="adjoint")
    sim.add_argument("--out", default="simulate_out",
                     help="output prefix")

    pit = sub.add_parser("pit", help="PIT calibration diagnostics")
    _add_data_options(pit)
    _add_model_options(pit)
    pit.add_argument("--fit-json", help="stored fit report to reuse "
                                        "(skips refitting)")
    pit.add_argument("--bins", type=int, default=10)
    pit.add_argument("--pmf-at", type=_int_list, default=None,
                     help="time indices whose conditional pmf to export")
    pit.add_argument("--out", default="pit_out", help="output prefix")
    return root


def _load_series(parser, args):
    if not args.input:
        parser.error("--input is required")
    try:
        return tsio.read_series(args.input, no_intercept=args.no_intercept,
                                design=args.design)
    except OSError as exc:
        print(f"tiltseries: cannot read {args.input}: {exc}",
              file=sys.stderr)
        raise SystemExit(1)


def _fit_once(ts, spec, args):
    from .mele import fit_semiparametric
    from .parametric import fit_negbin, fit_poisson

    bounds = _bounds(args)
    if args.method == "poisson":
        return fit_poisson(ts, spec, bounds=bounds)
    if args.method == "negbin":
        return fit_negbin(ts, spec, bounds=bounds)
    return fit_semiparametric(ts, spec, bounds=bounds,
                              gradient=args.gradient)


def cmd_fit(parser, args):
    ts = _load_series(parser, args)
    if args.method == "negbin" and args.lam != 0.5:
        parser.error("the negative-binomial fit is defined for "
                     "--lambda 0.5 only")
    spec = MeanModelSpec(q=ts.ncov, ar_lags=args.ar, ma_lags=args.ma,
                         lam=args.lam)
    fit = _fit_once(ts, spec, args)
    rows = None
    if args.infer:
        from .inference import lrt_single
        rows = []
        for j, name in enumerate(spec.param_names(ts.column_labels())):
            r = lrt_single(ts, spec, j, family=args.method,
                           level=args.level, bounds=_bounds(args),
                           unconstrained=fit, gradient=args.gradient)
            rows.append({
                "param": name, "estimate": r.estimate, "se_eq": r.se_eq,
                "ci": list(r.ci), "lrt": r.lrt_stat, "pvalue": r.pvalue,
            })
    txt, js = tsio.write_fit_report(args.out, fit, spec=spec,
                                    input_path=args.input,
                                    inference_rows=rows)
    print(fit.summary())
    print(f"report written to {txt} and {js}")
    return 0 if fit.converged else 2


def cmd_simulate(parser, args):
    from .simulation import SimSpec, run_experiment, simulate

    spec = SimSpec(args.model, args.n, burn_in=args.burn_in, seed=args.seed)
    if args.reps is None:
        ts = simulate(spec)
        path = f"{args.out}_series.csv"
        tsio.write_series(path, ts)
        print(f"{args.n}-row series written to {path}")
        return 0
    result = run_experiment(spec, args.reps, fit_methods=args.fit,
                            seed=args.seed, se_params=args.se_params,
                            level=args.level, gradient=args.gradient,
                            workers=args.threads)
    cov = f"{args.out}_coverage.csv"
    est = f"{args.out}_estimates.csv"
    tsio.write_coverage_csv(cov, result)
    tsio.write_estimates_csv(est, result)
    print(result.summary())
    print(f"reports written to {cov} and {est}")
    return 0


def cmd_pit(parser, args):
    from .diagnostics import conditional_pmf, pit_histogram

    if args.bins < 1:
        parser.error("--bins must be a positive count")
    if args.fit_json:
        report = tsio.load_fit_report(args.fit_json)
        src = args.input or report.get("input")
        if not src:
            parser.error("stored report has no input path; pass --input")
        args.input = src
        ts = _load_series(parser, args)
        spec = tsio.report_spec(report)
        fit = tsio.rebuild_fit(report, ts, spec)
    else:
        ts = _load_series(parser, args)
        spec = MeanModelSpec(q=ts.ncov, ar_lags=args.ar, ma_lags=args.ma,
                             lam=args.lam)
        fit = _fit_once(ts, spec, args)
        if not fit.converged:
            print("tiltseries: fit did not converge", file=sys.stderr)
            return 2
    hist = pit_histogram(fit, bins=args.bins)
    path = f"{args.out}_hist.csv"
    tsio.write_histogram_csv(path, hist)
    print(hist.summary())
    print(f"histogram written to {path}")
    if args.pmf_at:
        blocks = [(t, conditional_pmf(fit, t)) for t in args.pmf_at]
        pmf_path = f"{args.out}_pmf.csv"
        tsio.write_pmf_csv(pmf_path, blocks)
        print(f"conditional pmfs written to {pmf_path}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            return cmd_fit(parser, args)
        if args.command == "simulate":
            return cmd_simulate(parser, args)
        return cmd_pit(parser, args)
    except NonConvergenceError as exc:
        print(f"tiltseries: non-convergence: {exc}", file=sys.stderr)
        return 2
    except TiltseriesError as exc:
        print(f"tiltseries: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"tiltseries: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
