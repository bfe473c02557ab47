"""Pure NumPy implementation of the numerical kernels.

This module is the reference backend: the compiled extension
(``tiltseries._core``) mirrors every function here with identical
semantics and is preferred at import time when available.  Keep the two
in lock-step; the cross-backend tests assert elementwise agreement.

Conventions shared by both backends:

* the support atoms are the observed responses, one atom per
  observation (duplicates kept), so ``atoms[t]`` is observation t;
* ``b`` is the log-normalizer ``-log sum_j p_j exp(theta * y_j)``;
* conditional variances are second moments about the *model* mean
  ``mu_t`` (for a solved tilt this is the tilted variance up to the
  root-find tolerance, and at t = 0 under the gauge it is the second
  moment of the base masses about ``mu_0``);
* residuals are ``e_t = (y_t - mu_t) / var_t**lam`` with ``sqrt`` used
  verbatim when ``lam == 0.5``.
"""

import math

import numpy as np

from .errors import (
    STATUS_EXPLODED,
    STATUS_INFEASIBLE,
    STATUS_NO_ROOT,
    STATUS_OK,
    STATUS_THETA_CAP,
)

NAME = "pure"

# Family codes for the recursion kernels.
FAMILY_POISSON = 0
FAMILY_NEGBIN = 1
FAMILY_TILTED = 2

_MAX_TILT_ITER = 200


def tilt_stats(atoms, masses, theta):
    """Log-normalizer, mean and variance of the tilted distribution.

    Returns ``(b, mean, var)`` where ``var`` is the second moment about
    the tilted mean.  Overflow-safe via max-subtraction.
    """
    s = theta * atoms
    c = s.max()
    u = masses * np.exp(s - c)
    s0 = u.sum()
    b = -(math.log(s0) + c)
    w = u / s0
    mean = float(w @ atoms)
    d = atoms - mean
    var = float(w @ (d * d))
    return b, mean, var


def tilt_weights(atoms, masses, theta):
    """Normalized tilted probabilities ``p_j exp(b + theta y_j)``."""
    s = theta * atoms
    c = s.max()
    u = masses * np.exp(s - c)
    return u / u.sum()


def _residual_scale(var, lam):
    return math.sqrt(var) if lam == 0.5 else var**lam


def solve_tilt(atoms, masses, mu, warm=0.0, rtol=1e-12, theta_cap=500.0,
               hull_margin=1e-8):
    """Root of the tilted-mean equation ``mean(theta) = mu``.

    Safeguarded Newton iteration on a maintained bracket, with doubling
    expansion from the warm start.  Returns ``(status, theta)``; the
    root is unique because the tilted mean is strictly increasing.
    """
    lo_atom = float(atoms.min())
    hi_atom = float(atoms.max())
    if mu <= lo_atom + hull_margin * max(1.0, abs(lo_atom)):
        return STATUS_INFEASIBLE, math.nan
    if mu >= hi_atom - hull_margin * max(1.0, abs(hi_atom)):
        return STATUS_INFEASIBLE, math.nan

    tol = rtol * max(1.0, abs(mu))
    th = min(max(warm, -theta_cap), theta_cap)
    _, m, v = tilt_stats(atoms, masses, th)
    if abs(m - mu) <= tol:
        return STATUS_OK, th

    # Expand a bracket [lo, hi] with mean(lo) < mu < mean(hi).
    if m < mu:
        lo = th
        hi = None
        step = 1.0
        while hi is None:
            if lo >= theta_cap:
                return STATUS_THETA_CAP, math.nan
            t2 = min(lo + step, theta_cap)
            _, m2, _ = tilt_stats(atoms, masses, t2)
            if m2 >= mu:
                hi = t2
            else:
                lo = t2
            step *= 2.0
        th = lo
    else:
        hi = th
        lo = None
        step = 1.0
        while lo is None:
            if hi <= -theta_cap:
                return STATUS_THETA_CAP, math.nan
            t2 = max(hi - step, -theta_cap)
            _, m2, _ = tilt_stats(atoms, masses, t2)
            if m2 <= mu:
                lo = t2
            else:
                hi = t2
            step *= 2.0
        th = lo

    # Newton clipped to the bracket, bisection when it escapes.
    _, m, v = tilt_stats(atoms, masses, th)
    for _ in range(_MAX_TILT_ITER):
        if abs(m - mu) <= tol:
            # Polish: meeting the mean tolerance in a flat region can
            # still leave theta off by ~tol/var, so take up to two more
            # Newton steps while they keep improving.
            for _ in range(2):
                if v <= 0.0 or m == mu:
                    break
                t_new = th + (mu - m) / v
                if not (lo < t_new < hi):
                    break
                _, m_new, v_new = tilt_stats(atoms, masses, t_new)
                if abs(m_new - mu) >= abs(m - mu):
                    break
                th, m, v = t_new, m_new, v_new
            return STATUS_OK, th
        if v > 0.0:
            t_new = th + (mu - m) / v
        else:
            t_new = 0.5 * (lo + hi)
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        _, m_new, v_new = tilt_stats(atoms, masses, t_new)
        if m_new < mu:
            lo = t_new
        else:
            hi = t_new
        th, m, v = t_new, m_new, v_new
        if (hi - lo) <= 1e-15 * max(1.0, abs(lo), abs(hi)):
            if abs(m - mu) <= 1e-8 * max(1.0, abs(mu)):
                return STATUS_OK, th
            return STATUS_NO_ROOT, math.nan
    if abs(m - mu) <= 1e-8 * max(1.0, abs(mu)):
        return STATUS_OK, th
    return STATUS_NO_ROOT, math.nan


def arma_component(Z, e, t, ar_lags, phi, ma_lags, psi):
    """One step of the ARMA recursion; pre-sample Z and e are zero."""
    z = 0.0
    for i in range(len(ar_lags)):
        s = t - ar_lags[i]
        if s >= 0:
            z += phi[i] * (Z[s] + e[s])
    for k in range(len(ma_lags)):
        s = t - ma_lags[k]
        if s >= 0:
            z += psi[k] * e[s]
    return z


def recurse(y, X, beta, ar_lags, phi, ma_lags, psi, lam, family, alpha,
            atoms, masses, w_cap=30.0, rtol=1e-12, theta_cap=500.0,
            hull_margin=1e-8):
    """Forward state recursion for one parameter point.

    Returns ``(status, t_fail, W, Z, e, mu, var, b, theta)``.  For the
    tilted family, ``theta[0] = b[0] = 0`` is assigned (gauge) and the
    per-time tilts are solved for ``t >= 1``; parametric families leave
    ``b`` and ``theta`` as NaN.
    """
    n1 = y.shape[0]
    W = np.empty(n1)
    Z = np.empty(n1)
    e = np.empty(n1)
    mu = np.empty(n1)
    var = np.empty(n1)
    b = np.full(n1, math.nan)
    theta = np.full(n1, math.nan)

    th_prev = 0.0
    for t in range(n1):
        z = arma_component(Z, e, t, ar_lags, phi, ma_lags, psi)
        w_t = float(X[t] @ beta) + z
        if abs(w_t) > w_cap:
            return STATUS_EXPLODED, t, W, Z, e, mu, var, b, theta
        m = math.exp(w_t)
        if family == FAMILY_POISSON:
            v = m
        elif family == FAMILY_NEGBIN:
            v = m + m * m / alpha
        else:
            if t == 0:
                th = 0.0
                bb = 0.0
                d = atoms - m
                v = float(masses @ (d * d))
            else:
                status, th = solve_tilt(atoms, masses, m, warm=th_prev,
                                        rtol=rtol, theta_cap=theta_cap,
                                        hull_margin=hull_margin)
                if status != STATUS_OK:
                    return status, t, W, Z, e, mu, var, b, theta
                bb, _, _ = tilt_stats(atoms, masses, th)
                wts = tilt_weights(atoms, masses, th)
                d = atoms - m
                v = float(wts @ (d * d))
            theta[t] = th
            b[t] = bb
            th_prev = th
        Z[t] = z
        W[t] = w_t
        mu[t] = m
        var[t] = v
        e[t] = (y[t] - m) / _residual_scale(v, lam)
    return STATUS_OK, -1, W, Z, e, mu, var, b, theta


def parametric_loglik(y, X, beta, ar_lags, phi, ma_lags, psi, lam, family,
                      alpha, w_cap=30.0):
    """Conditional log-likelihood of a Poisson or negative-binomial fit.

    Returns ``(status, t_fail, loglik)``.
    """
    n1 = y.shape[0]
    Z = np.empty(n1)
    e = np.empty(n1)
    ll = 0.0
    if family == FAMILY_NEGBIN:
        lga = math.lgamma(alpha)
        lla = math.log(alpha)
    for t in range(n1):
        z = arma_component(Z, e, t, ar_lags, phi, ma_lags, psi)
        w_t = float(X[t] @ beta) + z
        if abs(w_t) > w_cap:
            return STATUS_EXPLODED, t, math.nan
        m = math.exp(w_t)
        yt = y[t]
        if family == FAMILY_POISSON:
            v = m
            ll += yt * w_t - m - math.lgamma(yt + 1.0)
        else:
            v = m + m * m / alpha
            lr = math.log1p(m / alpha)
            ll += (math.lgamma(yt + alpha) - lga - math.lgamma(yt + 1.0)
                   - alpha * lr + yt * (w_t - lla - lr))
        Z[t] = z
        e[t] = (yt - m) / _residual_scale(v, lam)
    return STATUS_OK, -1, ll


def _softmax_pinned(logits_free):
    """Masses from free logits with atom 0's logit pinned at zero."""
    full = np.concatenate(([0.0], logits_free))
    full -= full.max()
    p = np.exp(full)
    p /= p.sum()
    return p


def sp_objective(y, X, beta, ar_lags, phi, ma_lags, psi, lam, logits_free,
                 rho, nu, want_grad, w_cap=30.0, rtol=1e-12, theta_cap=500.0,
                 hull_margin=1e-8):
    """Penalized empirical log-likelihood objective (and its gradient).

    Evaluates ``f = -l(beta, gamma, p) + nu*g + rho*g**2`` where ``l``
    is the empirical log-likelihood with per-time tilts profiled out,
    ``p`` is the pinned softmax of ``logits_free``, and
    ``g = sum_j p_j y_j - mu_0`` is the gauge constraint residual.

    The gradient is exact: tilts are differentiated implicitly through
    the mean constraint and the state recursion is differentiated by a
    backward (adjoint) sweep.  Returns
    ``(status, t_fail, f, grad, g, raw_loglik)`` with ``grad`` packed as
    ``[beta, phi, psi, logits_free]`` (None when ``want_grad`` is off).
    """
    n1 = y.shape[0]
    q = beta.shape[0]
    n_ar = len(ar_lags)
    n_ma = len(ma_lags)
    p = _softmax_pinned(logits_free)
    atoms = y

    W = np.empty(n1)
    Z = np.empty(n1)
    e = np.empty(n1)
    mu = np.empty(n1)
    var = np.empty(n1)
    scale = np.empty(n1)
    theta = np.zeros(n1)
    b = np.zeros(n1)
    tmean = np.empty(n1)     # tilted mean (p-mean at t = 0)
    mom3 = np.empty(n1)      # sum_j w_j (y_j - mu_t)^3
    R = np.empty((n1, n1)) if want_grad else None   # rows exp(b + theta*y)

    loglik = 0.0
    th_prev = 0.0
    for t in range(n1):
        z = arma_component(Z, e, t, ar_lags, phi, ma_lags, psi)
        w_t = float(X[t] @ beta) + z
        if abs(w_t) > w_cap:
            return STATUS_EXPLODED, t, math.inf, None, math.nan, math.nan
        m = math.exp(w_t)
        if t == 0:
            wts = p
            if want_grad:
                R[0] = 1.0
        else:
            status, th = solve_tilt(atoms, p, m, warm=th_prev, rtol=rtol,
                                    theta_cap=theta_cap,
                                    hull_margin=hull_margin)
            if status != STATUS_OK:
                return status, t, math.inf, None, math.nan, math.nan
            bb, _, _ = tilt_stats(atoms, p, th)
            r = np.exp(bb + th * atoms)
            wts = p * r
            theta[t] = th
            b[t] = bb
            th_prev = th
            if want_grad:
                R[t] = r
        d = atoms - m
        d2 = d * d
        v = float(wts @ d2)
        tmean[t] = float(wts @ atoms)
        mom3[t] = float(wts @ (d2 * d))
        Z[t] = z
        W[t] = w_t
        mu[t] = m
        var[t] = v
        scale[t] = _residual_scale(v, lam)
        e[t] = (y[t] - m) / scale[t]
        loglik += math.log(p[t]) + b[t] + theta[t] * y[t]

    g = float(p @ atoms) - mu[0]
    f = -loglik + nu * g + rho * g * g
    if not want_grad:
        return STATUS_OK, -1, f, None, g, loglik

    # Backward adjoint sweep for d f / d (beta, phi, psi, logits).
    pen = nu + 2.0 * rho * g
    ebar = np.zeros(n1)
    Zbar = np.zeros(n1)
    beta_bar = np.zeros(q)
    phi_bar = np.zeros(n_ar)
    psi_bar = np.zeros(n_ma)
    pbar = pen * atoms - 1.0 / p
    for t in range(n1 - 1, -1, -1):
        d = atoms - mu[t]
        d2 = d * d
        vbar = ebar[t] * (-lam * e[t] / var[t])
        mubar = ebar[t] * (-1.0 / scale[t])
        if t == 0:
            mubar += vbar * (-2.0 * (tmean[0] - mu[0]))
            pbar += vbar * d2
            mubar += -pen
        else:
            # d v / d theta and the implicit-function denominator.
            T = mom3[t] - (tmean[t] - mu[t]) * var[t]
            denom = var[t] + mu[t] * (tmean[t] - mu[t])
            thetabar = -y[t] + tmean[t] + vbar * T
            mubar += thetabar / denom
            r = R[t]
            pbar += r - thetabar * (r * d) / denom + vbar * (r * (d2 - var[t]))
            mubar += vbar * (-2.0 * (tmean[t] - mu[t]))
        wbar = mubar * mu[t]
        zbar = Zbar[t] + wbar
        beta_bar += wbar * X[t]
        for i in range(n_ar):
            s = t - ar_lags[i]
            if s >= 0:
                phi_bar[i] += zbar * (Z[s] + e[s])
                Zbar[s] += zbar * phi[i]
                ebar[s] += zbar * phi[i]
        for k in range(n_ma):
            s = t - ma_lags[k]
            if s >= 0:
                psi_bar[k] += zbar * e[s]
                ebar[s] += zbar * psi[k]

    lbar = p * (pbar - float(p @ pbar))
    grad = np.concatenate([beta_bar, phi_bar, psi_bar, lbar[1:]])
    return STATUS_OK, -1, f, grad, g, loglik
