"""Forward state recursion for the observation-driven mean model.

``recurse`` produces the per-time state (W_t, Z_t, e_t, mu_t, var_t)
for fixed parameters under one of three conditional-variance rules:
Poisson (var = mu), negative binomial (var = mu + mu^2/alpha) and
semiparametric (variance of the tilted atomic distribution whose mean
is mu_t).  The ARMA component uses pre-sample values Z_t = e_t = 0 and

    Z_t = sum_i phi_i (Z_{t-i} + e_{t-i}) + sum_k psi_k e_{t-k}.
"""

import numpy as np

from . import _pure
from .backend import active
from .data import FittedState, validate_dataset
from .errors import STATUS_OK, DimensionError, raise_for_status
from .tilt import HULL_MARGIN, MEAN_RTOL, THETA_CAP, solve_tilt, tilted_weights

W_CAP = 30.0
_DUMMY = np.array([0.5, 0.5])
_DUMMY.setflags(write=False)


class PoissonVariance:
    """Equidispersed rule: var = mu."""

    family = _pure.FAMILY_POISSON

    def var_for(self, mu, t):
        return mu


class NegBinVariance:
    """Overdispersed rule var = mu + mu^2 / alpha; alpha > 0."""

    family = _pure.FAMILY_NEGBIN

    def __init__(self, alpha):
        alpha = float(alpha)
        if not alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        self.alpha = alpha

    def var_for(self, mu, t):
        return mu + mu * mu / self.alpha


class SemiparametricVariance:
    """Variance of the tilted distribution solved to have mean mu.

    Holds the atomic distribution so the provider is a function of
    (mu, t) alone.  At t = 0 the gauge applies: no tilt is solved and
    the variance is the second moment of the base masses about mu.
    """

    family = _pure.FAMILY_TILTED

    def __init__(self, dist):
        self.dist = dist

    def var_for(self, mu, t):
        d = self.dist.atoms - mu
        if t == 0:
            return float(self.dist.masses @ (d * d))
        theta = solve_tilt(self.dist, mu)
        w = tilted_weights(self.dist, theta)
        return float(w @ (d * d))


def recurse(ts, spec, params, vp, validate=True):
    """Run the state recursion and return a :class:`FittedState`.

    Raises :class:`InfeasibleMean` (semiparametric provider, target mean
    off the support hull) or :class:`StateExplosion` (|W_t| > 30) with
    the offending time index.
    """
    if validate:
        validate_dataset(ts, spec)
        if (params.beta.shape[0] != spec.q
                or params.phi.shape[0] != len(spec.ar_lags)
                or params.psi.shape[0] != len(spec.ma_lags)):
            raise DimensionError(
                "parameter blocks do not match the model specification"
            )
    if vp.family == _pure.FAMILY_NEGBIN:
        alpha = vp.alpha
    else:
        alpha = 1.0
    if vp.family == _pure.FAMILY_TILTED:
        atoms = vp.dist.atoms
        masses = vp.dist.masses
    else:
        # Unused by the parametric kernels; fixed shape keeps one signature.
        atoms = _DUMMY
        masses = _DUMMY
    ar = np.asarray(spec.ar_lags, dtype=np.int64)
    ma = np.asarray(spec.ma_lags, dtype=np.int64)
    status, t_fail, W, Z, e, mu, var, b, theta = active.recurse(
        ts.y, ts.x, params.beta, ar, params.phi, ma,
        params.psi, spec.lam, vp.family, alpha, atoms, masses,
        w_cap=W_CAP, rtol=MEAN_RTOL, theta_cap=THETA_CAP,
        hull_margin=HULL_MARGIN,
    )
    if status != STATUS_OK:
        raise_for_status(status, t=t_fail)
    return FittedState(W=W, Z=Z, e=e, mu=mu, var=var, b=b, theta=theta)
