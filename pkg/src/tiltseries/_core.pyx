# cython: language_level=3
"""Compiled implementation of the numerical kernels.

Function-for-function mirror of the pure NumPy backend; see that module
for the shared conventions.  Keep the two in lock-step: every algorithm
here follows the same operation order, so the backends agree
elementwise to rounding noise, and the cross-backend tests enforce
that.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, lgamma, log, log1p, sqrt

from .errors import (
    STATUS_EXPLODED,
    STATUS_INFEASIBLE,
    STATUS_NO_ROOT,
    STATUS_OK,
    STATUS_THETA_CAP,
)

cnp.import_array()

NAME = "compiled"

FAMILY_POISSON = 0
FAMILY_NEGBIN = 1
FAMILY_TILTED = 2

cdef int _OK = STATUS_OK
cdef int _INFEASIBLE = STATUS_INFEASIBLE
cdef int _EXPLODED = STATUS_EXPLODED
cdef int _THETA_CAP = STATUS_THETA_CAP
cdef int _NO_ROOT = STATUS_NO_ROOT

cdef int _FAM_POISSON = 0
cdef int _FAM_NEGBIN = 1
cdef int _FAM_TILTED = 2

cdef int _MAX_TILT_ITER = 200

cdef double _NAN = float("nan")


cdef inline double _residual_scale_c(double var, double lam) noexcept:
    if lam == 0.5:
        return sqrt(var)
    return var ** lam


def _residual_scale(var, lam):
    return _residual_scale_c(var, lam)


cdef void _stats_c(const double[::1] atoms, const double[::1] masses,
                   double theta, double[::1] w, double* b_out,
                   double* mean_out, double* var_out) noexcept:
    """Tilted log-normalizer, mean, variance; ``w`` gets the weights."""
    cdef Py_ssize_t n = atoms.shape[0]
    cdef Py_ssize_t j
    cdef double c, s, s0, mean, d, var
    c = theta * atoms[0]
    for j in range(1, n):
        s = theta * atoms[j]
        if s > c:
            c = s
    s0 = 0.0
    for j in range(n):
        w[j] = masses[j] * exp(theta * atoms[j] - c)
        s0 += w[j]
    b_out[0] = -(log(s0) + c)
    mean = 0.0
    for j in range(n):
        w[j] /= s0
        mean += w[j] * atoms[j]
    mean_out[0] = mean
    var = 0.0
    for j in range(n):
        d = atoms[j] - mean
        var += w[j] * d * d
    var_out[0] = var


def tilt_stats(atoms, masses, theta):
    """Log-normalizer, mean and variance of the tilted distribution.

    Returns ``(b, mean, var)`` where ``var`` is the second moment about
    the tilted mean.  Overflow-safe via max-subtraction.
    """
    cdef const double[::1] a = np.ascontiguousarray(atoms, dtype=np.float64)
    cdef const double[::1] m = np.ascontiguousarray(masses, dtype=np.float64)
    cdef double[::1] w = np.empty(a.shape[0])
    cdef double b, mean, var
    _stats_c(a, m, theta, w, &b, &mean, &var)
    return b, mean, var


def tilt_weights(atoms, masses, theta):
    """Normalized tilted probabilities ``p_j exp(b + theta y_j)``."""
    cdef const double[::1] a = np.ascontiguousarray(atoms, dtype=np.float64)
    cdef const double[::1] m = np.ascontiguousarray(masses, dtype=np.float64)
    out = np.empty(a.shape[0])
    cdef double[::1] w = out
    cdef double b, mean, var
    _stats_c(a, m, theta, w, &b, &mean, &var)
    return out


cdef int _solve_tilt_c(const double[::1] atoms, const double[::1] masses,
                       double mu, double warm, double rtol, double theta_cap,
                       double hull_margin, double[::1] scratch,
                       double* th_out) noexcept:
    cdef Py_ssize_t n = atoms.shape[0]
    cdef Py_ssize_t j
    cdef double lo_atom = atoms[0]
    cdef double hi_atom = atoms[0]
    cdef double tol, th, b, m, v, lo, hi, step, t2, m2, v2
    cdef double t_new, m_new, v_new
    cdef bint has_lo, has_hi
    cdef int it, k

    for j in range(1, n):
        if atoms[j] < lo_atom:
            lo_atom = atoms[j]
        if atoms[j] > hi_atom:
            hi_atom = atoms[j]
    th_out[0] = _NAN
    if mu <= lo_atom + hull_margin * max(1.0, fabs(lo_atom)):
        return _INFEASIBLE
    if mu >= hi_atom - hull_margin * max(1.0, fabs(hi_atom)):
        return _INFEASIBLE

    tol = rtol * max(1.0, fabs(mu))
    th = min(max(warm, -theta_cap), theta_cap)
    _stats_c(atoms, masses, th, scratch, &b, &m, &v)
    if fabs(m - mu) <= tol:
        th_out[0] = th
        return _OK

    # Expand a bracket [lo, hi] with mean(lo) < mu < mean(hi).
    lo = 0.0
    hi = 0.0
    if m < mu:
        lo = th
        has_hi = False
        step = 1.0
        while not has_hi:
            if lo >= theta_cap:
                return _THETA_CAP
            t2 = min(lo + step, theta_cap)
            _stats_c(atoms, masses, t2, scratch, &b, &m2, &v2)
            if m2 >= mu:
                hi = t2
                has_hi = True
            else:
                lo = t2
            step *= 2.0
        th = lo
    else:
        hi = th
        has_lo = False
        step = 1.0
        while not has_lo:
            if hi <= -theta_cap:
                return _THETA_CAP
            t2 = max(hi - step, -theta_cap)
            _stats_c(atoms, masses, t2, scratch, &b, &m2, &v2)
            if m2 <= mu:
                lo = t2
                has_lo = True
            else:
                hi = t2
            step *= 2.0
        th = lo

    # Newton clipped to the bracket, bisection when it escapes.
    _stats_c(atoms, masses, th, scratch, &b, &m, &v)
    for it in range(_MAX_TILT_ITER):
        if fabs(m - mu) <= tol:
            # Polish: meeting the mean tolerance in a flat region can
            # still leave theta off by ~tol/var, so take up to two more
            # Newton steps while they keep improving.
            for k in range(2):
                if v <= 0.0 or m == mu:
                    break
                t_new = th + (mu - m) / v
                if not (lo < t_new < hi):
                    break
                _stats_c(atoms, masses, t_new, scratch, &b, &m_new, &v_new)
                if fabs(m_new - mu) >= fabs(m - mu):
                    break
                th = t_new
                m = m_new
                v = v_new
            th_out[0] = th
            return _OK
        if v > 0.0:
            t_new = th + (mu - m) / v
        else:
            t_new = 0.5 * (lo + hi)
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        _stats_c(atoms, masses, t_new, scratch, &b, &m_new, &v_new)
        if m_new < mu:
            lo = t_new
        else:
            hi = t_new
        th = t_new
        m = m_new
        v = v_new
        if (hi - lo) <= 1e-15 * max(1.0, max(fabs(lo), fabs(hi))):
            if fabs(m - mu) <= 1e-8 * max(1.0, fabs(mu)):
                th_out[0] = th
                return _OK
            return _NO_ROOT
    if fabs(m - mu) <= 1e-8 * max(1.0, fabs(mu)):
        th_out[0] = th
        return _OK
    return _NO_ROOT


def solve_tilt(atoms, masses, mu, warm=0.0, rtol=1e-12, theta_cap=500.0,
               hull_margin=1e-8):
    """Root of the tilted-mean equation ``mean(theta) = mu``.

    Safeguarded Newton iteration on a maintained bracket, with doubling
    expansion from the warm start.  Returns ``(status, theta)``; the
    root is unique because the tilted mean is strictly increasing.
    """
    cdef const double[::1] a = np.ascontiguousarray(atoms, dtype=np.float64)
    cdef const double[::1] m = np.ascontiguousarray(masses, dtype=np.float64)
    cdef double[::1] scratch = np.empty(a.shape[0])
    cdef double th
    cdef int status
    status = _solve_tilt_c(a, m, mu, warm, rtol, theta_cap, hull_margin,
                           scratch, &th)
    return status, th


cdef inline double _arma_c(const double[::1] Z, const double[::1] e,
                           Py_ssize_t t, const cnp.int64_t[::1] ar,
                           const double[::1] phi,
                           const cnp.int64_t[::1] ma,
                           const double[::1] psi) noexcept:
    cdef double z = 0.0
    cdef Py_ssize_t i, k, s
    for i in range(ar.shape[0]):
        s = t - ar[i]
        if s >= 0:
            z += phi[i] * (Z[s] + e[s])
    for k in range(ma.shape[0]):
        s = t - ma[k]
        if s >= 0:
            z += psi[k] * e[s]
    return z


def arma_component(Z, e, t, ar_lags, phi, ma_lags, psi):
    """One step of the ARMA recursion; pre-sample Z and e are zero."""
    cdef const double[::1] Zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef const double[::1] ev = np.ascontiguousarray(e, dtype=np.float64)
    cdef const cnp.int64_t[::1] ar = np.ascontiguousarray(
        ar_lags, dtype=np.int64)
    cdef const cnp.int64_t[::1] ma = np.ascontiguousarray(
        ma_lags, dtype=np.int64)
    cdef const double[::1] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const double[::1] ps = np.ascontiguousarray(psi, dtype=np.float64)
    return _arma_c(Zv, ev, t, ar, ph, ma, ps)


def recurse(y, X, beta, ar_lags, phi, ma_lags, psi, lam, family, alpha,
            atoms, masses, w_cap=30.0, rtol=1e-12, theta_cap=500.0,
            hull_margin=1e-8):
    """Forward state recursion for one parameter point.

    Returns ``(status, t_fail, W, Z, e, mu, var, b, theta)``.  For the
    tilted family, ``theta[0] = b[0] = 0`` is assigned (gauge) and the
    per-time tilts are solved for ``t >= 1``; parametric families leave
    ``b`` and ``theta`` as NaN.
    """
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(beta, dtype=np.float64)
    cdef const cnp.int64_t[::1] ar = np.ascontiguousarray(
        ar_lags, dtype=np.int64)
    cdef const cnp.int64_t[::1] ma = np.ascontiguousarray(
        ma_lags, dtype=np.int64)
    cdef const double[::1] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const double[::1] ps = np.ascontiguousarray(psi, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(atoms, dtype=np.float64)
    cdef const double[::1] mv = np.ascontiguousarray(masses, dtype=np.float64)
    cdef int fam = family
    cdef double alp = alpha
    cdef double lamd = lam
    cdef double cap = w_cap
    cdef double rt = rtol
    cdef double tcap = theta_cap
    cdef double hm = hull_margin

    cdef Py_ssize_t n1 = yv.shape[0]
    cdef Py_ssize_t q = bv.shape[0]
    W_a = np.empty(n1)
    Z_a = np.empty(n1)
    e_a = np.empty(n1)
    mu_a = np.empty(n1)
    var_a = np.empty(n1)
    b_a = np.full(n1, _NAN)
    theta_a = np.full(n1, _NAN)
    cdef double[::1] W = W_a
    cdef double[::1] Z = Z_a
    cdef double[::1] e = e_a
    cdef double[::1] mu = mu_a
    cdef double[::1] var = var_a
    cdef double[::1] b = b_a
    cdef double[::1] theta = theta_a
    cdef double[::1] scratch = np.empty(max(av.shape[0], 1))

    cdef Py_ssize_t t, j
    cdef double z, w_t, m, v, th, bb, d, th_prev, mean_s, var_s
    cdef int status
    th = 0.0
    bb = 0.0
    th_prev = 0.0
    for t in range(n1):
        z = _arma_c(Z, e, t, ar, ph, ma, ps)
        w_t = 0.0
        for j in range(q):
            w_t += Xv[t, j] * bv[j]
        w_t += z
        if fabs(w_t) > cap:
            return _EXPLODED, t, W_a, Z_a, e_a, mu_a, var_a, b_a, theta_a
        m = exp(w_t)
        if fam == _FAM_POISSON:
            v = m
        elif fam == _FAM_NEGBIN:
            v = m + m * m / alp
        else:
            if t == 0:
                th = 0.0
                bb = 0.0
                v = 0.0
                for j in range(av.shape[0]):
                    d = av[j] - m
                    v += mv[j] * d * d
            else:
                status = _solve_tilt_c(av, mv, m, th_prev, rt, tcap, hm,
                                       scratch, &th)
                if status != _OK:
                    return (status, t, W_a, Z_a, e_a, mu_a, var_a, b_a,
                            theta_a)
                _stats_c(av, mv, th, scratch, &bb, &mean_s, &var_s)
                # scratch now holds the normalized tilted weights
                v = 0.0
                for j in range(av.shape[0]):
                    d = av[j] - m
                    v += scratch[j] * d * d
            theta[t] = th
            b[t] = bb
            th_prev = th
        Z[t] = z
        W[t] = w_t
        mu[t] = m
        var[t] = v
        e[t] = (yv[t] - m) / _residual_scale_c(v, lamd)
    return _OK, -1, W_a, Z_a, e_a, mu_a, var_a, b_a, theta_a


def parametric_loglik(y, X, beta, ar_lags, phi, ma_lags, psi, lam, family,
                      alpha, w_cap=30.0):
    """Conditional log-likelihood of a Poisson or negative-binomial fit.

    Returns ``(status, t_fail, loglik)``.
    """
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(beta, dtype=np.float64)
    cdef const cnp.int64_t[::1] ar = np.ascontiguousarray(
        ar_lags, dtype=np.int64)
    cdef const cnp.int64_t[::1] ma = np.ascontiguousarray(
        ma_lags, dtype=np.int64)
    cdef const double[::1] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const double[::1] ps = np.ascontiguousarray(psi, dtype=np.float64)
    cdef int fam = family
    cdef double alp = alpha
    cdef double lamd = lam
    cdef double cap = w_cap

    cdef Py_ssize_t n1 = yv.shape[0]
    cdef Py_ssize_t q = bv.shape[0]
    cdef double[::1] Z = np.empty(n1)
    cdef double[::1] e = np.empty(n1)
    cdef double ll = 0.0
    cdef double lga = 0.0
    cdef double lla = 0.0
    cdef Py_ssize_t t, j
    cdef double z, w_t, m, v, yt, lr
    if fam == _FAM_NEGBIN:
        lga = lgamma(alp)
        lla = log(alp)
    for t in range(n1):
        z = _arma_c(Z, e, t, ar, ph, ma, ps)
        w_t = 0.0
        for j in range(q):
            w_t += Xv[t, j] * bv[j]
        w_t += z
        if fabs(w_t) > cap:
            return _EXPLODED, t, _NAN
        m = exp(w_t)
        yt = yv[t]
        if fam == _FAM_POISSON:
            v = m
            ll += yt * w_t - m - lgamma(yt + 1.0)
        else:
            v = m + m * m / alp
            lr = log1p(m / alp)
            ll += (lgamma(yt + alp) - lga - lgamma(yt + 1.0)
                   - alp * lr + yt * (w_t - lla - lr))
        Z[t] = z
        e[t] = (yt - m) / _residual_scale_c(v, lamd)
    return _OK, -1, ll


def _softmax_pinned(logits_free):
    """Masses from free logits with atom 0's logit pinned at zero."""
    cdef const double[::1] lf = np.ascontiguousarray(
        logits_free, dtype=np.float64)
    cdef Py_ssize_t n1 = lf.shape[0] + 1
    out = np.empty(n1)
    cdef double[::1] p = out
    cdef Py_ssize_t j
    cdef double c = 0.0
    cdef double s = 0.0
    for j in range(1, n1):
        if lf[j - 1] > c:
            c = lf[j - 1]
    p[0] = exp(0.0 - c)
    for j in range(1, n1):
        p[j] = exp(lf[j - 1] - c)
    for j in range(n1):
        s += p[j]
    for j in range(n1):
        p[j] /= s
    return out


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
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(beta, dtype=np.float64)
    cdef const cnp.int64_t[::1] ar = np.ascontiguousarray(
        ar_lags, dtype=np.int64)
    cdef const cnp.int64_t[::1] ma = np.ascontiguousarray(
        ma_lags, dtype=np.int64)
    cdef const double[::1] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const double[::1] ps = np.ascontiguousarray(psi, dtype=np.float64)
    cdef double rhod = rho
    cdef double nud = nu
    cdef bint wg = bool(want_grad)
    cdef double lamd = lam
    cdef double cap = w_cap
    cdef double rt = rtol
    cdef double tcap = theta_cap
    cdef double hm = hull_margin

    cdef Py_ssize_t n1 = yv.shape[0]
    cdef Py_ssize_t q = bv.shape[0]
    cdef Py_ssize_t n_ar = ar.shape[0]
    cdef Py_ssize_t n_ma = ma.shape[0]

    p_a = _softmax_pinned(logits_free)
    cdef double[::1] p = p_a
    cdef const double[::1] atoms = yv

    cdef double[::1] W = np.empty(n1)
    cdef double[::1] Z = np.empty(n1)
    cdef double[::1] e = np.empty(n1)
    cdef double[::1] mu = np.empty(n1)
    cdef double[::1] var = np.empty(n1)
    cdef double[::1] scale = np.empty(n1)
    cdef double[::1] theta = np.zeros(n1)
    cdef double[::1] b = np.zeros(n1)
    cdef double[::1] tmean = np.empty(n1)   # tilted mean (p-mean at t = 0)
    cdef double[::1] mom3 = np.empty(n1)    # sum_j w_j (y_j - mu_t)^3
    cdef double[:, ::1] R                   # rows exp(b + theta*y)
    if wg:
        R = np.empty((n1, n1))
    else:
        R = np.empty((1, 1))
    cdef double[::1] scratch = np.empty(n1)

    cdef double loglik = 0.0
    cdef double th_prev = 0.0
    cdef Py_ssize_t t, j, i, k, s
    cdef double z, w_t, m, th, bb, mean_s, var_s, d, d2, v, tm, m3, wt, rj
    cdef int status

    for t in range(n1):
        z = _arma_c(Z, e, t, ar, ph, ma, ps)
        w_t = 0.0
        for j in range(q):
            w_t += Xv[t, j] * bv[j]
        w_t += z
        if fabs(w_t) > cap:
            return _EXPLODED, t, float("inf"), None, _NAN, _NAN
        m = exp(w_t)
        v = 0.0
        tm = 0.0
        m3 = 0.0
        if t == 0:
            for j in range(n1):
                if wg:
                    R[0, j] = 1.0
                d = atoms[j] - m
                d2 = d * d
                v += p[j] * d2
                tm += p[j] * atoms[j]
                m3 += p[j] * d2 * d
        else:
            status = _solve_tilt_c(atoms, p, m, th_prev, rt, tcap, hm,
                                   scratch, &th)
            if status != _OK:
                return status, t, float("inf"), None, _NAN, _NAN
            _stats_c(atoms, p, th, scratch, &bb, &mean_s, &var_s)
            theta[t] = th
            b[t] = bb
            th_prev = th
            for j in range(n1):
                rj = exp(bb + th * atoms[j])
                if wg:
                    R[t, j] = rj
                wt = p[j] * rj
                d = atoms[j] - m
                d2 = d * d
                v += wt * d2
                tm += wt * atoms[j]
                m3 += wt * d2 * d
        Z[t] = z
        W[t] = w_t
        mu[t] = m
        var[t] = v
        tmean[t] = tm
        mom3[t] = m3
        scale[t] = _residual_scale_c(v, lamd)
        e[t] = (yv[t] - m) / scale[t]
        loglik += log(p[t]) + b[t] + theta[t] * yv[t]

    cdef double g = 0.0
    for j in range(n1):
        g += p[j] * atoms[j]
    g -= mu[0]
    cdef double f = -loglik + nud * g + rhod * g * g
    if not wg:
        return _OK, -1, f, None, g, loglik

    # Backward adjoint sweep for d f / d (beta, phi, psi, logits).
    cdef double pen = nud + 2.0 * rhod * g
    cdef double[::1] ebar = np.zeros(n1)
    cdef double[::1] Zbar = np.zeros(n1)
    beta_bar_a = np.zeros(q)
    phi_bar_a = np.zeros(n_ar)
    psi_bar_a = np.zeros(n_ma)
    cdef double[::1] beta_bar = beta_bar_a
    cdef double[::1] phi_bar = phi_bar_a
    cdef double[::1] psi_bar = psi_bar_a
    pbar_a = np.empty(n1)
    cdef double[::1] pbar = pbar_a
    for j in range(n1):
        pbar[j] = pen * atoms[j] - 1.0 / p[j]

    cdef double vbar, mubar, T, denom, thetabar, wbar, zbar
    for t in range(n1 - 1, -1, -1):
        vbar = ebar[t] * (-lamd * e[t] / var[t])
        mubar = ebar[t] * (-1.0 / scale[t])
        if t == 0:
            mubar += vbar * (-2.0 * (tmean[0] - mu[0]))
            for j in range(n1):
                d = atoms[j] - mu[0]
                pbar[j] += vbar * d * d
            mubar += -pen
        else:
            # d v / d theta and the implicit-function denominator.
            T = mom3[t] - (tmean[t] - mu[t]) * var[t]
            denom = var[t] + mu[t] * (tmean[t] - mu[t])
            thetabar = -yv[t] + tmean[t] + vbar * T
            mubar += thetabar / denom
            for j in range(n1):
                rj = R[t, j]
                d = atoms[j] - mu[t]
                d2 = d * d
                pbar[j] += (rj - thetabar * (rj * d) / denom
                            + vbar * (rj * (d2 - var[t])))
            mubar += vbar * (-2.0 * (tmean[t] - mu[t]))
        wbar = mubar * mu[t]
        zbar = Zbar[t] + wbar
        for j in range(q):
            beta_bar[j] += wbar * Xv[t, j]
        for i in range(n_ar):
            s = t - ar[i]
            if s >= 0:
                phi_bar[i] += zbar * (Z[s] + e[s])
                Zbar[s] += zbar * ph[i]
                ebar[s] += zbar * ph[i]
        for k in range(n_ma):
            s = t - ma[k]
            if s >= 0:
                psi_bar[k] += zbar * e[s]
                ebar[s] += zbar * ps[k]

    cdef double dot = 0.0
    for j in range(n1):
        dot += p[j] * pbar[j]
    lbar_a = np.empty(n1)
    cdef double[::1] lbar = lbar_a
    for j in range(n1):
        lbar[j] = p[j] * (pbar[j] - dot)
    grad = np.concatenate([beta_bar_a, phi_bar_a, psi_bar_a, lbar_a[1:]])
    return _OK, -1, f, grad, g, loglik
