"""Data generators and the Monte Carlo experiment runner.

Five canned mean models cover the study designs used in the tests:

- ``M1``: intercept-only with one moving-average lag (Poisson),
- ``M1p``: M1 plus a linear trend coefficient whose truth is zero,
- ``M1pp``: M1 plus a second moving-average lag whose truth is zero,
- ``M2``: intercept plus trend t/n with one moving-average lag (Poisson),
- ``M3``: intercept, trend, and period-6 harmonics with one
  autoregressive lag, negative-binomial sampling.

Generation walks the same recursion the fitting engine uses (the shared
helpers from the pure kernel module), drawing each count from the
conditional distribution as it goes.  A burn-in prefix is simulated and
dropped so the retained series starts near its stationary regime; trend
covariates are held at zero during burn-in while harmonic phases run
continuously into the sample.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _pure
from .data import MeanModelSpec, ModelParams, TimeSeries
from .errors import DimensionError, NonConvergenceError, StateExplosion
from .engine import W_CAP

MODEL_IDS = ("M1", "M1p", "M1pp", "M2", "M3")

# Truths for M1, M1p, M1pp and M2 are conventions of this package
# (configurable); M3's vector is the canonical overdispersed test point.
_DEFAULTS = {
    "M1": dict(beta=(0.5,), phi=(), psi=(0.3,), aux=None),
    "M1p": dict(beta=(0.5, 0.0), phi=(), psi=(0.3,), aux=None),
    "M1pp": dict(beta=(0.5,), phi=(), psi=(0.3, 0.0), aux=None),
    "M2": dict(beta=(0.5, 1.0), phi=(), psi=(0.3,), aux=None),
    "M3": dict(beta=(0.1, 0.2, 0.3, 0.4), phi=(0.25,), psi=(), aux=4.0),
}

_SPECS = {
    "M1": dict(q=1, ar_lags=(), ma_lags=(1,)),
    "M1p": dict(q=2, ar_lags=(), ma_lags=(1,)),
    "M1pp": dict(q=1, ar_lags=(), ma_lags=(1, 2)),
    "M2": dict(q=2, ar_lags=(), ma_lags=(1,)),
    "M3": dict(q=4, ar_lags=(1,), ma_lags=()),
}

# Stacked index of the coefficient whose truth is zero, for null-
# hypothesis calibration studies.
_NULL_TARGETS = {"M1p": 1, "M1pp": 2}


def model_spec(model_id):
    """Mean-model specification for a canned model id."""
    if model_id not in MODEL_IDS:
        raise DimensionError(f"unknown model id {model_id!r}")
    return MeanModelSpec(lam=0.5, **_SPECS[model_id])


def model_family(model_id):
    """Sampling family for a canned model id."""
    if model_id not in MODEL_IDS:
        raise DimensionError(f"unknown model id {model_id!r}")
    return "negbin" if model_id == "M3" else "poisson"


def default_params(model_id):
    """Default true parameters for a canned model id."""
    if model_id not in MODEL_IDS:
        raise DimensionError(f"unknown model id {model_id!r}")
    d = _DEFAULTS[model_id]
    return ModelParams(d["beta"], d["phi"], d["psi"], aux=d["aux"])


def null_target(model_id):
    """Stacked index of the zero-truth coefficient, where one exists."""
    if model_id not in _NULL_TARGETS:
        raise DimensionError(
            f"model {model_id!r} has no designated null coefficient"
        )
    return _NULL_TARGETS[model_id]


def replication_seed(seed, rep):
    """Derived seed for one replication; streams are disjoint by design."""
    ss = np.random.SeedSequence(seed, spawn_key=(rep,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SimSpec:
    """One simulation configuration: model, length, truth, seed."""

    model_id: str
    n: int
    burn_in: int = 100
    true_params: ModelParams | None = None
    seed: int = 0

    def __post_init__(self):
        if self.model_id not in MODEL_IDS:
            raise DimensionError(f"unknown model id {self.model_id!r}")
        if self.n < 1:
            raise DimensionError("n must be at least 1")
        if self.burn_in < 0:
            raise DimensionError("burn_in must be non-negative")
        if self.true_params is None:
            object.__setattr__(self, "true_params",
                               default_params(self.model_id))
        p = self.true_params
        spec = model_spec(self.model_id)
        if (len(p.beta) != spec.q or len(p.phi) != len(spec.ar_lags)
                or len(p.psi) != len(spec.ma_lags)):
            raise DimensionError(
                f"true_params dimensions do not match model {self.model_id}"
            )
        if model_family(self.model_id) == "negbin":
            if p.aux is None or not (p.aux > 0):
                raise DimensionError("M3 requires a positive dispersion aux")

    def with_seed(self, seed):
        return replace(self, seed=seed)


def _design_row(model_id, t, n):
    """Design row at (retained) time t in 1..n; t <= 0 is burn-in."""
    trend = t / n if t > 0 else 0.0
    if model_id == "M1" or model_id == "M1pp":
        return (1.0,)
    if model_id == "M1p" or model_id == "M2":
        return (1.0, trend)
    w = 2.0 * math.pi * t / 6.0
    return (1.0, trend, math.cos(w), math.sin(w))


def simulate(spec, include_burn_in=False):
    """Generate one series from the model's recursion.

    Each step computes the linear state from lagged scaled residuals
    exactly as the fitting engine does, samples the count from the
    conditional distribution, then forms the residual from the sampled
    value.  Returns the retained series with its design matrix attached
    (or the full burn-in + sample path when asked).
    """
    mspec = model_spec(spec.model_id)
    family = model_family(spec.model_id)
    p = spec.true_params
    beta = np.asarray(p.beta, dtype=float)
    phi = np.asarray(p.phi, dtype=float)
    psi = np.asarray(p.psi, dtype=float)
    alpha = p.aux if p.aux is not None else 1.0
    lam = mspec.lam
    total = spec.burn_in + spec.n
    rng = np.random.default_rng(spec.seed)

    X = np.array([_design_row(spec.model_id, t - spec.burn_in, spec.n)
                  for t in range(total)])
    y = np.empty(total)
    Z = np.empty(total)
    e = np.empty(total)
    for t in range(total):
        z = _pure.arma_component(Z, e, t, mspec.ar_lags, phi,
                                 mspec.ma_lags, psi)
        w_t = float(X[t] @ beta) + z
        if abs(w_t) > W_CAP:
            raise StateExplosion(
                f"state exploded at step {t} during generation "
                f"(|W|={abs(w_t):.2f} > {W_CAP}, model={spec.model_id}, "
                f"seed={spec.seed})"
            )
        m = math.exp(w_t)
        if family == "poisson":
            v = m
            y[t] = rng.poisson(m)
        else:
            v = m + m * m / alpha
            # gamma-Poisson mixture: exact negative-binomial sampling
            y[t] = rng.poisson(rng.gamma(alpha, m / alpha))
        Z[t] = z
        e[t] = (y[t] - m) / _pure._residual_scale(v, lam)

    lo = 0 if include_burn_in else spec.burn_in
    labels = _design_labels(spec.model_id)
    return TimeSeries(y[lo:], X[lo:], labels=labels)


def _design_labels(model_id):
    if model_id in ("M1", "M1pp"):
        return ("intercept",)
    if model_id in ("M1p", "M2"):
        return ("intercept", "trend")
    return ("intercept", "trend", "cos6", "sin6")


@dataclass(frozen=True)
class CoverageReport:
    """Per-parameter Monte Carlo summary for one fitting method."""

    method: str
    model_id: str
    param_names: tuple[str, ...]
    truth: np.ndarray
    mean_est: np.ndarray
    se_emp: np.ndarray
    se_bar: np.ndarray
    coverage: np.ndarray
    level: float
    rep_count: int
    failure_count: int
    flagged: bool

    @property
    def success_count(self):
        return self.rep_count - self.failure_count

    def summary(self):
        lines = [
            f"{self.method} on {self.model_id}: "
            f"{self.success_count}/{self.rep_count} fits usable"
            + (" [flagged: failure rate above 5%]" if self.flagged else "")
        ]
        lines.append(
            f"  {'param':>12s} {'truth':>9s} {'mean':>9s} "
            f"{'se_emp':>8s} {'se_bar':>8s} {'cover':>6s}"
        )
        for j, name in enumerate(self.param_names):
            cov = (f"{100 * self.coverage[j]:.1f}%"
                   if np.isfinite(self.coverage[j]) else "--")
            sb = (f"{self.se_bar[j]:8.4f}"
                  if np.isfinite(self.se_bar[j]) else "      --")
            lines.append(
                f"  {name:>12s} {self.truth[j]:9.4f} "
                f"{self.mean_est[j]:9.4f} {self.se_emp[j]:8.4f} {sb} "
                f"{cov:>6s}"
            )
        return "\n".join(lines)


@dataclass(frozen=True)
class ExperimentResult:
    """Coverage reports plus raw estimate matrices, keyed by method."""

    spec: SimSpec
    reports: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)

    def summary(self):
        return "\n\n".join(r.summary() for r in self.reports.values())


_METHODS = ("poisson", "negbin", "semiparametric")


def _fit_method(method, ts, mspec, bounds, gradient):
    from .mele import fit_semiparametric
    from .parametric import fit_negbin, fit_poisson

    if method == "poisson":
        return fit_poisson(ts, mspec, bounds=bounds)
    if method == "negbin":
        return fit_negbin(ts, mspec, bounds=bounds)
    return fit_semiparametric(ts, mspec, bounds=bounds, gradient=gradient)


def _replicate_one(job):
    """One replication: simulate once, fit every requested method.

    Returns ``(rep, {method: (est, se, cov) | None})`` with None marking
    a failed fit.  Top-level so process pools can ship it.
    """
    (spec, rep, fit_methods, seed, se_idx, level, bounds, gradient,
     truth, n_mean, z) = job
    from .inference import lrt_single

    mspec = model_spec(spec.model_id)
    ts = simulate(spec.with_seed(replication_seed(seed, rep)))
    out = {}
    for method in fit_methods:
        try:
            fit = _fit_method(method, ts, mspec, bounds, gradient)
            if not fit.converged:
                raise NonConvergenceError("fit did not converge")
            est = fit.params.stacked()
            se = np.full(n_mean, np.nan)
            cov = np.full(n_mean, np.nan)
            if method == "semiparametric":
                for j in se_idx:
                    r = lrt_single(ts, mspec, j, null_value=truth[j],
                                   family=method, level=level,
                                   bounds=bounds, unconstrained=fit,
                                   gradient=gradient)
                    se[j] = r.se_eq
                    cov[j] = 1.0 if r.pvalue >= 1.0 - level else 0.0
            else:
                if fit.se is not None:
                    se = fit.se[:n_mean]
                    cov = (np.abs(est - truth) <= z * se).astype(float)
        except Exception:
            out[method] = None
            continue
        out[method] = (est, se, cov)
    return rep, out


def run_experiment(spec, reps, fit_methods=("poisson",), seed=0, *,
                   se_params=None, level=0.95, bounds=None,
                   gradient="adjoint", workers=1):
    """Simulate, fit, and summarize across replications.

    Parametric methods get Wald intervals from their information-based
    standard errors.  The semiparametric method prices intervals by the
    likelihood ratio (equivalent standard errors), which needs one
    constrained refit per parameter per replication; ``se_params``
    restricts that work to the stacked indices of interest (default:
    all mean parameters).

    Failed replications (exceptions or non-convergence) are counted,
    excluded from the summaries, and flagged when they exceed 5% of
    ``reps``.  ``workers`` > 1 fans replications out to a process pool;
    results are aggregated by replication index either way, so the
    summaries do not depend on completion order.
    """
    if reps < 10:
        raise DimensionError("reps must be at least 10")
    for m in fit_methods:
        if m not in _METHODS:
            raise DimensionError(f"unknown fit method {m!r}")
    if workers < 1:
        raise DimensionError("workers must be at least 1")
    mspec = model_spec(spec.model_id)
    names = list(mspec.param_names(_design_labels(spec.model_id)))
    truth = spec.true_params.stacked()
    n_mean = len(truth)
    z = float(_norm_ppf(0.5 + level / 2.0))

    if se_params is None:
        se_idx = list(range(n_mean))
    else:
        se_idx = sorted(set(int(j) for j in se_params))
        if se_idx and not (0 <= se_idx[0] and se_idx[-1] < n_mean):
            raise DimensionError("se_params outside the mean-parameter range")

    jobs = [(spec, rep, tuple(fit_methods), seed, se_idx, level, bounds,
             gradient, truth, n_mean, z) for rep in range(reps)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_replicate_one, jobs))
    else:
        results = dict(map(_replicate_one, jobs))

    est_rows = {m: [] for m in fit_methods}
    se_rows = {m: [] for m in fit_methods}
    cov_rows = {m: [] for m in fit_methods}
    failures = {m: 0 for m in fit_methods}
    for rep in range(reps):
        for method in fit_methods:
            got = results[rep][method]
            if got is None:
                failures[method] += 1
                continue
            est, se, cov = got
            est_rows[method].append(est)
            se_rows[method].append(se)
            cov_rows[method].append(cov)

    reports = {}
    estimates = {}
    for method in fit_methods:
        fails = failures[method]
        good = reps - fails
        if good == 0:
            raise NonConvergenceError(
                f"all {reps} replications failed for method {method!r}"
            )
        E = np.array(est_rows[method])
        S = np.array(se_rows[method])
        C = np.array(cov_rows[method])
        se_bar = _finite_col_mean(S)
        coverage = _finite_col_mean(C)
        reports[method] = CoverageReport(
            method=method, model_id=spec.model_id,
            param_names=tuple(names), truth=truth,
            mean_est=E.mean(axis=0), se_emp=E.std(axis=0, ddof=1),
            se_bar=se_bar, coverage=coverage, level=level,
            rep_count=reps, failure_count=fails,
            flagged=fails > 0.05 * reps,
        )
        estimates[method] = E
    return ExperimentResult(spec=spec, reports=reports, estimates=estimates)


def _finite_col_mean(A):
    """Column means ignoring non-finite entries; NaN for empty columns."""
    out = np.full(A.shape[1], np.nan)
    for j in range(A.shape[1]):
        col = A[:, j]
        good = np.isfinite(col)
        if good.any():
            out[j] = float(col[good].mean())
    return out


def _norm_ppf(q):
    from scipy.stats import norm
    return norm.ppf(q)
