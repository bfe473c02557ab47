"""Maximum likelihood for the Poisson and negative-binomial models.

Both fits run the state recursion for the conditional mean and maximize
the corresponding conditional log-likelihood with a quasi-Newton
optimizer on numerically differentiated objectives.  Standard errors
come from the inverse of the expected (Fisher) information, with the
derivative of the linear state propagated through the lagged-residual
feedback of the recursion.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import _pure
from .backend import active
from .data import FittedState, ModelParams, ParamBounds, validate_dataset
from .engine import W_CAP, NegBinVariance, PoissonVariance, recurse
from .errors import STATUS_OK, BoundsError, DimensionError

GRAD_STEP = 1e-6      # relative central-difference step for gradients
HESS_STEP = 1e-4      # relative step for Hessian columns
MAX_ITER = 500
PGTOL = 1e-6          # optimizer's projected-gradient stop
GTOL = 1e-3           # post-hoc gradient sanity threshold for the flag
FTOL = 1e-12
BIG = 1e12            # objective value returned for infeasible points

POISSON_LIMIT_BOUNDARY = "Poisson-limit boundary"


@dataclass(frozen=True)
class ParametricFitResult:
    """Outcome of a Poisson or negative-binomial fit."""

    family: str
    params: ModelParams
    loglik: float
    se: np.ndarray | None
    state: FittedState
    converged: bool
    iterations: int
    param_names: tuple[str, ...]
    warnings: tuple[str, ...] = ()
    ts: object = None

    @property
    def se_available(self) -> bool:
        return self.se is not None

    def summary(self) -> str:
        lines = [f"{self.family} fit: loglik={self.loglik:.6f} "
                 f"converged={self.converged} iterations={self.iterations}"]
        se = self.se if self.se is not None else [math.nan] * len(self.param_names)
        full = np.concatenate([
            self.params.stacked(),
            [] if self.params.aux is None else [self.params.aux],
        ])
        for name, est, s in zip(self.param_names, full, se):
            lines.append(f"  {name:>12s}  {est: .6f}  (se {s:.6f})")
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        return "\n".join(lines)


def central_gradient(fn, x, rel_step=GRAD_STEP):
    """Central-difference gradient with per-coordinate relative steps."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return g


def numerical_hessian(fn, x, rel_step=HESS_STEP, grad_step=GRAD_STEP):
    """Symmetrized Hessian from central differences of central gradients.

    Returns ``(H, max_asym)`` where ``max_asym`` is the largest relative
    asymmetry removed by the symmetrization.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    H = np.empty((d, d))
    for i in range(d):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        H[:, i] = (central_gradient(fn, xp, grad_step)
                   - central_gradient(fn, xm, grad_step)) / (2.0 * h)
    scale = max(1.0, float(np.abs(H).max()))
    asym = float(np.abs(H - H.T).max()) / scale
    return 0.5 * (H + H.T), asym


def expected_information(ts, spec, params, family, state=None):
    """Fisher information of the conditional likelihood at ``params``.

    Each observation contributes ``w_t d_t d_t'`` where ``w_t`` is the
    conditional curvature in the linear state W_t (``mu_t`` for Poisson,
    ``mu_t a/(a + mu_t)`` for negative binomial with dispersion ``a``)
    and ``d_t = dW_t/dparam``.  Because the recursion feeds lagged scaled
    residuals back into W_t, d_t obeys the same lag structure as the
    state itself and is built by forward accumulation.  For the
    negative-binomial family the matrix carries a trailing dispersion
    row/column; its pure-dispersion curvature term needs the expectation
    of a trigamma under the conditional pmf, evaluated by truncated
    summation.
    """
    from scipy.special import polygamma
    from scipy.stats import nbinom

    y = ts.y
    X = ts.x
    q, s, r = spec.q, len(spec.ar_lags), len(spec.ma_lags)
    lam = spec.lam
    alpha = params.aux
    negbin = family == _pure.FAMILY_NEGBIN
    p = q + s + r + (1 if negbin else 0)
    if state is None:
        vp = PoissonVariance() if not negbin else NegBinVariance(alpha)
        state = recurse(ts, spec, params, vp, validate=False)
    mu, e, Z, var = state.mu, state.e, state.Z, state.var
    n = len(y)

    dW = np.zeros((n, p))
    De = np.zeros((n, p))
    info = np.zeros((p, p))
    for t in range(n):
        d = dW[t]
        d[:q] = X[t]
        for i, L in enumerate(spec.ar_lags):
            u = t - L
            if u >= 0:
                d += params.phi[i] * (dW[u] + De[u])
                d[q + i] += Z[u] + e[u]
        for k, L in enumerate(spec.ma_lags):
            u = t - L
            if u >= 0:
                d += params.psi[k] * De[u]
                d[q + s + k] += e[u]
        m = mu[t]
        v = var[t]
        dv_dmu = 1.0 if not negbin else 1.0 + 2.0 * m / alpha
        a_t = -m / v ** lam - lam * e[t] * dv_dmu * m / v
        De[t] = a_t * d
        if negbin:
            # direct dependence of the residual scale on the dispersion
            De[t, p - 1] += lam * e[t] * m * m / (alpha * alpha * v)
        w = m if not negbin else m * alpha / (alpha + m)
        info += w * np.outer(d, d)

    if negbin:
        # E[trigamma(y + alpha)] under the conditional pmf, truncated
        # where the tail mass drops below 1e-10.
        pr = alpha / (alpha + mu)
        ymax = int(np.max(nbinom.ppf(1.0 - 1e-10, alpha, pr))) + 1
        grid = np.arange(ymax + 1)
        pmf = nbinom.pmf(grid[None, :], alpha, pr[:, None])
        etri = pmf @ polygamma(1, grid + alpha)
        j = (polygamma(1, alpha) - etri - 1.0 / alpha
             + 1.0 / (alpha + mu))
        info[p - 1, p - 1] += float(np.sum(j))
    return info


def iwls_poisson_glm(y, X, max_iter=50, tol=1e-10):
    """Log-link Poisson regression by iterated weighted least squares.

    Plain GLM ignoring any ARMA structure; used only to initialize the
    full fits.
    """
    n, q = X.shape
    beta = np.zeros(q)
    # Start from a constant mean on the response scale.
    ybar = max(float(y.mean()), 0.05)
    col_norms = (X != 0).all(axis=0) & (np.ptp(X, axis=0) == 0)
    if col_norms.any():
        j = int(np.argmax(col_norms))
        beta[j] = math.log(ybar) / X[0, j]
    for _ in range(max_iter):
        eta = np.clip(X @ beta, -W_CAP, W_CAP)
        mu = np.exp(eta)
        z = eta + (y - mu) / mu
        WX = X * mu[:, None]
        try:
            new = np.linalg.solve(X.T @ WX, WX.T @ z)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(new)):
            break
        step = new - beta
        beta = new
        if np.abs(step).max() < tol * max(1.0, np.abs(beta).max()):
            break
    return beta


class _NegativeLoglik:
    """Negative conditional log-likelihood over the stacked parameters.

    For the negative-binomial family the last coordinate is log(alpha).
    Infeasible parameter points (state explosion) get a large finite
    value so line searches back off instead of crashing.
    """

    def __init__(self, ts, spec, family):
        self.y = ts.y
        self.X = ts.x
        self.spec = spec
        self.family = family
        self.ar = np.asarray(spec.ar_lags, dtype=np.int64)
        self.ma = np.asarray(spec.ma_lags, dtype=np.int64)
        self.q = spec.q
        self.n_ar = len(spec.ar_lags)
        self.n_ma = len(spec.ma_lags)

    def split(self, x):
        q, s = self.q, self.n_ar
        beta = x[:q]
        phi = x[q:q + s]
        psi = x[q + s:q + s + self.n_ma]
        if self.family == _pure.FAMILY_NEGBIN:
            alpha = math.exp(x[-1])
        else:
            alpha = 1.0
        return beta, phi, psi, alpha

    def loglik(self, x):
        beta, phi, psi, alpha = self.split(x)
        status, _, ll = active.parametric_loglik(
            self.y, self.X, beta, self.ar, phi, self.ma, psi,
            self.spec.lam, self.family, alpha, w_cap=W_CAP,
        )
        if status != STATUS_OK:
            return None
        return ll

    def __call__(self, x):
        ll = self.loglik(x)
        if ll is None or not math.isfinite(ll):
            return BIG
        return -ll

    def grad(self, x):
        return central_gradient(self, x)


def _fit(ts, spec, family, bounds_spec, init=None, fixed=None,
         compute_se=True):
    validate_dataset(ts, spec, counts=True)
    obj = _NegativeLoglik(ts, spec, family)
    q, s, r = spec.q, len(spec.ar_lags), len(spec.ma_lags)

    if init is None:
        beta0 = iwls_poisson_glm(ts.y, ts.x)
        x0 = np.concatenate([beta0, np.zeros(s + r)])
    else:
        x0 = init.stacked()
    box = ([(-bounds_spec.beta_abs, bounds_spec.beta_abs)] * q
           + [(-bounds_spec.arma_abs, bounds_spec.arma_abs)] * (s + r))
    if family == _pure.FAMILY_NEGBIN:
        alpha0 = 10.0 if (init is None or init.aux is None) else init.aux
        x0 = np.concatenate([x0, [math.log(alpha0)]])
        box.append((math.log(bounds_spec.aux_lo), math.log(bounds_spec.aux_hi)))
    if fixed:
        for idx, val in fixed.items():
            if not (0 <= idx < q + s + r):
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
            x0[idx] = val
    for i, (lo, hi) in enumerate(box):
        x0[i] = min(max(x0[i], lo), hi)

    res = minimize(
        obj, x0, jac=obj.grad, method="L-BFGS-B", bounds=box,
        options={"maxiter": MAX_ITER, "ftol": FTOL, "gtol": PGTOL,
                 "maxcor": 20},
    )
    x_hat = res.x
    grad = obj.grad(x_hat)
    # Treat gradient components pushed against an active bound as
    # satisfied (the projected gradient is what the optimizer controls).
    proj = grad.copy()
    for i, (lo, hi) in enumerate(box):
        if (x_hat[i] - lo) < 1e-10 * max(1.0, abs(lo)) and proj[i] > 0:
            proj[i] = 0.0
        if (hi - x_hat[i]) < 1e-10 * max(1.0, abs(hi)) and proj[i] < 0:
            proj[i] = 0.0
    converged = bool(res.success) and float(np.abs(proj).max()) < GTOL

    warn_list = []
    alpha = None
    if family == _pure.FAMILY_NEGBIN:
        alpha = math.exp(x_hat[-1])
        if alpha >= 0.99 * bounds_spec.aux_hi:
            warn_list.append(POISSON_LIMIT_BOUNDARY)

    params = ModelParams(
        x_hat[:q], x_hat[q:q + s], x_hat[q + s:q + s + r], aux=alpha,
    )
    vp = (PoissonVariance() if family == _pure.FAMILY_POISSON
          else NegBinVariance(alpha))
    state = recurse(ts, spec, params, vp, validate=False)

    se = None
    if compute_se and not fixed:
        info = expected_information(ts, spec, params, family, state=state)
        try:
            cov = np.linalg.inv(info)
            diag = np.diag(cov)
            if np.all(diag > 0):
                se = np.sqrt(diag)
        except np.linalg.LinAlgError:
            pass
        if se is None:
            warn_list.append(
                "information matrix not positive definite; se unavailable"
            )
            warnings.warn(warn_list[-1], RuntimeWarning, stacklevel=3)

    names = spec.param_names(ts.column_labels())
    if family == _pure.FAMILY_NEGBIN:
        names = names + ("alpha",)
    fam = "poisson" if family == _pure.FAMILY_POISSON else "negbin"
    return ParametricFitResult(
        family=fam, params=params, loglik=float(-res.fun), se=se,
        state=state, converged=converged,
        iterations=int(getattr(res, "nit", 0)),
        param_names=tuple(names), warnings=tuple(warn_list), ts=ts,
    )


def fit_poisson(ts, spec, bounds=None, init=None, fixed=None,
                compute_se=True):
    """Poisson maximum likelihood for the mean recursion parameters.

    ``init`` optionally warm-starts from existing :class:`ModelParams`;
    ``fixed`` maps stacked parameter indices to frozen values (used by
    constrained refits for likelihood-ratio tests), which suppresses
    the standard errors.
    """
    return _fit(ts, spec, _pure.FAMILY_POISSON, bounds or ParamBounds(),
                init=init, fixed=fixed, compute_se=compute_se)


def fit_negbin(ts, spec, bounds=None, init=None, fixed=None,
               compute_se=True):
    """Negative-binomial maximum likelihood including dispersion alpha."""
    return _fit(ts, spec, _pure.FAMILY_NEGBIN, bounds or ParamBounds(),
                init=init, fixed=fixed, compute_se=compute_se)
