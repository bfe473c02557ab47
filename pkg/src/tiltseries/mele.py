"""Maximum empirical likelihood estimation with a tilted response law.

The estimator maximizes

    l(beta, gamma, p) = sum_t { log p_t + b_t + theta_t y_t }

over the regression/ARMA parameters and the base masses ``p`` jointly,
where each ``theta_t`` (t >= 1) is pinned by the mean constraint
``tilted mean = mu_t(beta, gamma)`` and ``b_t`` is its normalizer.  The
identification gauge fixes ``theta_0 = b_0 = 0``, which turns the t = 0
mean constraint into ``g = sum_j p_j y_j - mu_0 = 0``; ``g`` is enforced
by an augmented-Lagrangian penalty with an escalating quadratic weight.

Masses are parameterized by a softmax over one logit per observation
with the first logit pinned to zero, so positivity and normalization
hold by construction.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .backend import active
from .data import FittedState, ModelParams, ParamBounds, validate_dataset
from .engine import W_CAP, SemiparametricVariance, recurse
from .errors import (
    STATUS_OK,
    BoundsError,
    DegenerateSupportError,
    DimensionError,
)
from .parametric import BIG, central_gradient, fit_poisson
from .tilt import HULL_MARGIN, MEAN_RTOL, THETA_CAP, AtomicDistribution

LOGIT_BOUND = 10.0
RHO_SCHEDULE = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)
GAUGE_RTOL = 1e-6
FTOL_ROUND = 1e-8
MAX_ROUNDS = 12
INNER_MAXITER = 400


@dataclass(frozen=True)
class SemiparametricFitResult:
    """Outcome of :func:`fit_semiparametric`."""

    params: ModelParams
    dist: AtomicDistribution
    loglik: float
    state: FittedState
    converged: bool
    gauge_residual: float
    iterations: int
    rounds: int
    param_names: tuple[str, ...]
    warnings: tuple[str, ...] = ()
    ts: object = None

    def summary(self) -> str:
        lines = [f"semiparametric fit: loglik={self.loglik:.6f} "
                 f"converged={self.converged} rounds={self.rounds} "
                 f"iterations={self.iterations} "
                 f"gauge_residual={self.gauge_residual:.3e}"]
        for name, est in zip(self.param_names, self.params.stacked()):
            lines.append(f"  {name:>12s}  {est: .6f}")
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        return "\n".join(lines)


class _PenalizedObjective:
    """Penalized negative empirical loglik over [beta, phi, psi, logits]."""

    def __init__(self, ts, spec, rho, nu, gradient="adjoint"):
        self.y = ts.y
        self.X = ts.x
        self.spec = spec
        self.ar = np.asarray(spec.ar_lags, dtype=np.int64)
        self.ma = np.asarray(spec.ma_lags, dtype=np.int64)
        self.q = spec.q
        self.s = len(spec.ar_lags)
        self.r = len(spec.ma_lags)
        self.rho = rho
        self.nu = nu
        self.gradient = gradient
        self.nfev = 0

    def split(self, x):
        q, s, r = self.q, self.s, self.r
        return (x[:q], x[q:q + s], x[q + s:q + s + r], x[q + s + r:])

    def raw(self, x, want_grad):
        beta, phi, psi, logits = self.split(x)
        self.nfev += 1
        return active.sp_objective(
            self.y, self.X, beta, self.ar, phi, self.ma, psi,
            self.spec.lam, logits, self.rho, self.nu, want_grad,
            w_cap=W_CAP, rtol=MEAN_RTOL, theta_cap=THETA_CAP,
            hull_margin=HULL_MARGIN,
        )

    def value(self, x):
        status, _, f, _, _, _ = self.raw(x, False)
        return f if status == STATUS_OK else BIG

    def value_and_grad(self, x):
        if self.gradient == "numeric":
            f = self.value(x)
            if f >= BIG:
                return BIG, np.zeros_like(x)
            return f, central_gradient(self.value, x)
        status, _, f, grad, _, _ = self.raw(x, True)
        if status != STATUS_OK:
            return BIG, np.zeros_like(x)
        return f, grad

    def diagnostics(self, x):
        """(loglik, gauge) at ``x`` without the penalty terms."""
        status, _, _, _, g, ll = self.raw(x, False)
        if status != STATUS_OK:
            return -math.inf, math.nan
        return ll, g


def _feasible_start(obj, x0, y, fixed=None):
    """Shrink the start toward a safe interior point until feasible."""

    def pin(x):
        if fixed:
            for idx, val in fixed.items():
                x[idx] = val
        return x

    x0 = pin(x0)
    if obj.value(x0) < BIG:
        return x0
    safe = x0.copy()
    safe[:] = 0.0
    # Intercept-like fallback: constant mean strictly inside the hull.
    ybar = float(np.mean(y))
    lo, hi = float(np.min(y)), float(np.max(y))
    target = min(max(ybar, lo + 0.1 * (hi - lo)), hi - 0.1 * (hi - lo))
    const = (np.ptp(obj.X, axis=0) == 0) & (obj.X[0] != 0)
    if const.any():
        j = int(np.argmax(const))
        safe[j] = math.log(target) / obj.X[0, j]
    for lam in (0.5, 0.25, 0.1, 0.0):
        x_try = pin(lam * x0 + (1.0 - lam) * safe)
        if obj.value(x_try) < BIG:
            return x_try
    raise DegenerateSupportError(
        "no feasible starting point for the semiparametric fit"
    )


def fit_semiparametric(ts, spec, bounds=None, gradient="adjoint",
                       init=None, init_masses=None, fixed=None,
                       max_rounds=MAX_ROUNDS,
                       inner_maxiter=INNER_MAXITER, verbose=False):
    """Fit the semiparametric model by nested profiling.

    ``gradient`` selects how the outer optimizer obtains derivatives:
    ``"adjoint"`` (default) differentiates the profiled objective
    exactly by a backward sweep; ``"numeric"`` uses central differences
    (slower by a factor of about the parameter count, kept as a
    cross-check).  ``init`` optionally supplies starting
    ``ModelParams`` (otherwise a Poisson fit initializes the mean
    parameters; masses always start uniform).

    Returns a :class:`SemiparametricFitResult`; ``converged`` requires
    the gauge residual below ``1e-6 * (1 + mu_0)`` and a relative
    objective change below 1e-8 across the final outer round.
    """
    bounds = bounds or ParamBounds()
    validate_dataset(ts, spec, counts=True)
    y = ts.y
    if np.unique(y).size < 2:
        raise DegenerateSupportError(
            "semiparametric fit needs at least two distinct responses"
        )
    n1 = ts.nobs
    warn_list = []

    if init is None:
        pois = fit_poisson(ts, spec, bounds)
        if not pois.converged:
            warn_list.append("Poisson initialization did not converge")
        init = pois.params
    x_mean = init.stacked()
    np.clip(x_mean[:spec.q], -bounds.beta_abs, bounds.beta_abs,
            out=x_mean[:spec.q])
    np.clip(x_mean[spec.q:], -bounds.arma_abs, bounds.arma_abs,
            out=x_mean[spec.q:])
    if init_masses is None:
        logits0 = np.zeros(n1 - 1)
    else:
        m = np.asarray(init_masses, dtype=float)
        if m.shape != (n1,):
            raise DimensionError("init_masses must have one entry per y_t")
        logits0 = np.clip(np.log(m[1:] / m[0]), -LOGIT_BOUND, LOGIT_BOUND)
    x = np.concatenate([x_mean, logits0])

    box = ([(-bounds.beta_abs, bounds.beta_abs)] * spec.q
           + [(-bounds.arma_abs, bounds.arma_abs)] * spec.n_arma
           + [(-LOGIT_BOUND, LOGIT_BOUND)] * (n1 - 1))
    if fixed:
        n_mean = spec.q + spec.n_arma
        for idx, val in fixed.items():
            if not (0 <= idx < n_mean):
                raise DimensionError(
                    f"fixed index {idx} outside the mean-parameter vector"
                )
            lo, hi = box[idx]
            if not (lo < val < hi):
                raise BoundsError(
                    f"fixed value {val} sits on or outside the box for "
                    f"parameter {idx}"
                )
            box[idx] = (val, val)

    nu = 0.0
    rho_idx = 0
    total_iter = 0
    prev_ll = None
    converged = False
    rounds = 0
    obj = _PenalizedObjective(ts, spec, RHO_SCHEDULE[0], nu, gradient)
    x = _feasible_start(obj, x, y, fixed)

    for rounds in range(1, max_rounds + 1):
        obj.rho = RHO_SCHEDULE[rho_idx]
        obj.nu = nu
        res = minimize(
            obj.value_and_grad, x, jac=True, method="L-BFGS-B",
            bounds=box,
            options={"maxiter": inner_maxiter, "ftol": FTOL_ROUND,
                     "gtol": 1e-6, "maxcor": 25},
        )
        x = res.x
        total_iter += int(res.nit)
        ll, g = obj.diagnostics(x)
        mu0 = math.exp(float(ts.x[0] @ x[:spec.q]))
        gauge_ok = abs(g) <= GAUGE_RTOL * (1.0 + abs(mu0))
        if verbose:
            print(f"round {rounds}: rho={obj.rho:.0e} nu={nu:+.4f} "
                  f"loglik={ll:.8f} gauge={g:+.2e} iters={res.nit} "
                  f"nfev={obj.nfev}")
        if prev_ll is not None and gauge_ok:
            if abs(ll - prev_ll) <= FTOL_ROUND * (1.0 + abs(ll)):
                converged = True
                prev_ll = ll
                break
        prev_ll = ll
        # Multiplier update, then escalate the quadratic weight while
        # the gauge is unmet.
        nu += 2.0 * obj.rho * g
        if not gauge_ok and rho_idx < len(RHO_SCHEDULE) - 1:
            rho_idx += 1

    beta, phi, psi, logits = obj.split(x)
    masses = _softmax_pinned(logits)
    dist = AtomicDistribution(y, masses)
    params = ModelParams(beta, phi, psi)
    state = recurse(ts, spec, params, SemiparametricVariance(dist),
                    validate=False)
    ll, g = obj.diagnostics(x)
    if not converged:
        warn_list.append(
            f"augmented-Lagrangian loop exhausted {rounds} rounds "
            f"(gauge residual {g:.2e})"
        )
    return SemiparametricFitResult(
        params=params, dist=dist, loglik=float(ll), state=state,
        converged=converged, gauge_residual=float(g),
        iterations=total_iter, rounds=rounds,
        param_names=spec.param_names(ts.column_labels()),
        warnings=tuple(warn_list), ts=ts,
    )


def _softmax_pinned(logits_free):
    full = np.concatenate(([0.0], logits_free))
    full -= full.max()
    p = np.exp(full)
    p /= p.sum()
    # Respect the hard mass floor of AtomicDistribution.
    tiny = 1e-12
    if p.min() < tiny:
        p = np.maximum(p, tiny)
        p /= p.sum()
    return p


def loglik_at(ts, spec, params, dist):
    """Empirical log-likelihood at given parameters and masses.

    ``dist`` must carry one atom per observation in observation order
    (its atoms are checked against ``ts.y``), because the mass term
    ``log p_t`` is indexed by time.
    """
    if dist.n_atoms != ts.nobs or not np.array_equal(dist.atoms, ts.y):
        raise DegenerateSupportError(
            "dist atoms must equal the observed responses in order"
        )
    state = recurse(ts, spec, params, SemiparametricVariance(dist),
                    validate=False)
    return empirical_loglik(dist, state.theta, b=state.b)


def empirical_loglik(dist, theta, b=None):
    """Evaluate ``sum_t log p_t + b_t + theta_t y_t`` directly.

    ``theta`` is a per-observation tilt vector; ``b`` defaults to the
    normalizers implied by ``theta``.  The atoms are taken in
    observation order.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != dist.atoms.shape:
        raise DegenerateSupportError("theta must have one entry per atom")
    if b is None:
        b = np.array([
            active.tilt_stats(dist.atoms, dist.masses, th)[0] for th in theta
        ])
    else:
        b = np.asarray(b, dtype=float)
    return float(np.log(dist.masses).sum() + b.sum()
                 + float(theta @ dist.atoms))


def mele_cdf(fit):
    """Step cdf of the fitted generating distribution.

    Returns a vectorized callable ``F`` with ``F(y) = sum_j p_j
    1(Y_j <= y)``, right-continuous, reaching 1 at the largest atom.
    """
    order = np.argsort(fit.dist.atoms, kind="stable")
    atoms = fit.dist.atoms[order]
    cum = np.cumsum(fit.dist.masses[order])

    def cdf(yq):
        idx = np.searchsorted(atoms, np.asarray(yq, dtype=float),
                              side="right")
        out = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
        return out if out.ndim else float(out)

    return cdf
