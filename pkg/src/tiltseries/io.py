"""CSV ingestion and report persistence.

CSV files are RFC-4180 style: UTF-8, header row required, '.' decimal
point.  Fit reports are written twice: a human-readable text file and a
JSON mirror carrying every number at full precision (shortest
round-trip float representation), so reloading a report reproduces the
estimates bit for bit.
"""

import csv
import json
import math

import numpy as np

from .data import MeanModelSpec, ModelParams, TimeSeries
from .errors import DimensionError, NonFiniteError


def read_series(path, no_intercept=False, design=None):
    """Load a modeling dataset from CSV.

    The file must have a header containing a ``y`` column; every other
    column is taken as a covariate in file order.  An intercept column
    is prepended unless ``no_intercept``.  When ``design`` is given
    (``"polio"`` or ``"kingscross"``) the covariate matrix is generated
    from the series length instead, and only ``y`` is read.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DimensionError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if "y" not in header:
        raise DimensionError(f"{path}: no 'y' column in header {header}")
    iy = header.index("y")
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if not body:
        raise DimensionError(f"{path}: no data rows")
    try:
        y = np.array([float(r[iy]) for r in body])
    except (ValueError, IndexError) as exc:
        raise NonFiniteError(f"{path}: unparseable response: {exc}") from None
    if design is not None:
        from .designs import design_by_name
        X, labels = design_by_name(design, len(y))
        return TimeSeries(y, X, labels=labels)
    cov_idx = [j for j in range(len(header)) if j != iy]
    try:
        cols = [np.array([float(r[j]) for r in body]) for j in cov_idx]
    except (ValueError, IndexError) as exc:
        raise NonFiniteError(f"{path}: unparseable covariate: {exc}") from None
    labels = [header[j] for j in cov_idx]
    if not no_intercept:
        cols.insert(0, np.ones(len(y)))
        labels.insert(0, "intercept")
    if not cols:
        raise DimensionError(f"{path}: no covariates and --no-intercept set")
    X = np.column_stack(cols)
    return TimeSeries(y, X, labels=labels)


def write_series(path, ts):
    """Write a series with its covariates (intercept column included)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["y", *ts.column_labels()])
        for t in range(ts.nobs):
            w.writerow([_fmt(ts.y[t]), *(_fmt(v) for v in ts.x[t])])


def _fmt(v):
    f = float(v)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def _is_semiparametric(fit):
    return hasattr(fit, "dist")


def fit_report_dict(fit, spec=None, input_path=None, extras=None):
    """Machine-readable mirror of a fit result."""
    sp = _is_semiparametric(fit)
    est = fit.params.stacked().tolist()
    if not sp and fit.params.aux is not None:
        est = est + [fit.params.aux]
    d = {
        "family": "semiparametric" if sp else fit.family,
        "param_names": list(fit.param_names),
        "estimates": est,
        "loglik": fit.loglik,
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "warnings": list(fit.warnings),
        "n_beta": len(fit.params.beta),
        "ar_lags": [] if spec is None else list(spec.ar_lags),
        "ma_lags": [] if spec is None else list(spec.ma_lags),
        "lam": 0.5 if spec is None else spec.lam,
        "state": {
            "W": fit.state.W.tolist(),
            "Z": fit.state.Z.tolist(),
            "e": fit.state.e.tolist(),
            "mu": fit.state.mu.tolist(),
            "var": fit.state.var.tolist(),
        },
    }
    if sp:
        d["rounds"] = int(fit.rounds)
        d["gauge_residual"] = fit.gauge_residual
        d["atoms"] = fit.dist.atoms.tolist()
        d["masses"] = fit.dist.masses.tolist()
        d["state"]["b"] = fit.state.b.tolist()
        d["state"]["theta"] = fit.state.theta.tolist()
    else:
        d["se"] = None if fit.se is None else np.asarray(fit.se).tolist()
    if input_path is not None:
        d["input"] = str(input_path)
    if extras:
        d.update(extras)
    return d


def write_fit_report(prefix, fit, spec=None, input_path=None, extras=None,
                     inference_rows=None):
    """Write ``<prefix>.txt`` (human) and ``<prefix>.json`` (machine).

    Returns the two paths.  ``inference_rows`` optionally appends a
    per-parameter likelihood-ratio table to both files.
    """
    txt = f"{prefix}.txt"
    js = f"{prefix}.json"
    d = fit_report_dict(fit, spec=spec, input_path=input_path, extras=extras)
    if inference_rows is not None:
        d["inference"] = inference_rows
    lines = [fit.summary()]
    if inference_rows:
        lines.append("")
        lines.append("likelihood-ratio inference (se_eq, Wald-equivalent CI):")
        lines.append("param,estimate,se_eq,ci_lo,ci_hi,lrt,pvalue")
        for row in inference_rows:
            lines.append(
                f"{row['param']},{_fmt(row['estimate'])},{_fmt(row['se_eq'])},"
                f"{_fmt(row['ci'][0])},{_fmt(row['ci'][1])},"
                f"{_fmt(row['lrt'])},{_fmt(row['pvalue'])}"
            )
    with open(txt, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(js, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=1)
        fh.write("\n")
    return txt, js


def load_fit_report(path):
    """Reload a JSON fit report written by :func:`write_fit_report`."""
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def report_spec(report):
    """Mean-model specification recorded in a stored report."""
    return MeanModelSpec(
        q=int(report["n_beta"]),
        ar_lags=tuple(report.get("ar_lags", ())),
        ma_lags=tuple(report.get("ma_lags", ())),
        lam=float(report.get("lam", 0.5)),
    )


def rebuild_fit(report, ts, spec):
    """Reconstruct a usable fit object from a stored report.

    The optimizer is not rerun; the stored estimates (and masses, for
    the semiparametric family) are pushed back through the state
    recursion, so diagnostics on the rebuilt fit match the original.
    """
    from .engine import (NegBinVariance, PoissonVariance,
                         SemiparametricVariance, recurse)
    from .tilt import AtomicDistribution

    fam = report["family"]
    nb = len(report["param_names"])
    q = int(report.get("n_beta", spec.q))
    s, r = len(spec.ar_lags), len(spec.ma_lags)
    est = np.asarray(report["estimates"], dtype=float)
    aux = est[q + s + r] if fam == "negbin" else None
    params = ModelParams(est[:q], est[q:q + s], est[q + s:q + s + r], aux=aux)
    if fam == "semiparametric":
        from .mele import SemiparametricFitResult

        dist = AtomicDistribution(report["atoms"], report["masses"])
        vp = SemiparametricVariance(dist)
        state = recurse(ts, spec, params, vp, validate=False)
        return SemiparametricFitResult(
            params=params, dist=dist, loglik=float(report["loglik"]),
            state=state, converged=bool(report["converged"]),
            gauge_residual=float(report.get("gauge_residual", math.nan)),
            iterations=int(report["iterations"]),
            rounds=int(report.get("rounds", 0)),
            param_names=tuple(report["param_names"]),
            warnings=tuple(report.get("warnings", ())), ts=ts,
        )
    from .parametric import ParametricFitResult

    vp = PoissonVariance() if fam == "poisson" else NegBinVariance(aux)
    state = recurse(ts, spec, params, vp, validate=False)
    se = report.get("se")
    return ParametricFitResult(
        family=fam, params=params, loglik=float(report["loglik"]),
        se=None if se is None else np.asarray(se, dtype=float),
        state=state, converged=bool(report["converged"]),
        iterations=int(report["iterations"]),
        param_names=tuple(report["param_names"]),
        warnings=tuple(report.get("warnings", ())), ts=ts,
    )


def write_histogram_csv(path, hist):
    """Plot-ready PIT histogram: one row per bin."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "height", "mean_pit_hi"])
        for j in range(hist.bins):
            w.writerow([
                _fmt(j / hist.bins), _fmt((j + 1) / hist.bins),
                _fmt(hist.heights[j]), _fmt(hist.mean_pit[j + 1]),
            ])


def write_pmf_csv(path, blocks):
    """Conditional pmf blocks: (t, value, probability) rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value", "probability"])
        for t, (vals, probs) in blocks:
            for v, p in zip(vals, probs):
                w.writerow([t, _fmt(v), _fmt(p)])


def write_coverage_csv(path, result):
    """Coverage study summary: one row per (method, parameter)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "param", "truth", "mean_est", "se_emp",
                    "se_bar", "coverage", "rep_count", "failure_count",
                    "flagged"])
        for method, rep in result.reports.items():
            for j, name in enumerate(rep.param_names):
                w.writerow([
                    method, name, _fmt(rep.truth[j]), _fmt(rep.mean_est[j]),
                    _fmt(rep.se_emp[j]), _fmt(rep.se_bar[j]),
                    _fmt(rep.coverage[j]), rep.rep_count, rep.failure_count,
                    int(rep.flagged),
                ])


def write_estimates_csv(path, result):
    """Raw estimate matrices for density plotting: one row per fit."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        first = next(iter(result.reports.values()))
        w.writerow(["method", "rep", *first.param_names])
        for method, E in result.estimates.items():
            for i in range(E.shape[0]):
                w.writerow([method, i, *(_fmt(v) for v in E[i])])
