"""PIT histograms and fitted conditional distributions.

The probability integral transform for a discrete predictive
distribution replaces the single cdf value by a piecewise-linear bridge
between ``F_t(y_t - 1)`` and ``F_t(y_t)``; averaging those bridges over
the sample gives an aggregate cdf that is uniform exactly when the
predictive distributions are calibrated.  Histogram heights are scaled
so a perfectly calibrated fit has height 1 in every bin.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

DEFAULT_BINS = 10
_TAIL = 1e-12          # parametric pmf truncation tail mass


def _family(fit):
    if hasattr(fit, "dist"):
        return "semiparametric"
    return fit.family


def _tilted_weights(fit, t):
    """Aggregated atom values and tilted probabilities at time t."""
    atoms = fit.dist.atoms
    masses = fit.dist.masses
    th = fit.state.theta[t]
    b = fit.state.b[t]
    w = masses * np.exp(b + th * atoms)
    vals, inverse = np.unique(atoms, return_inverse=True)
    probs = np.bincount(inverse, weights=w, minlength=len(vals))
    return vals, probs


def conditional_pmf(fit, t):
    """Fitted conditional distribution of Y_t given its past.

    Returns ``(values, probabilities)``.  Parametric families are
    truncated at the smallest support point whose cdf reaches
    ``1 - 1e-12``; the semiparametric family returns its atoms with the
    tilted weights, duplicates aggregated.
    """
    n = len(fit.state.mu)
    if not (0 <= t < n):
        raise DimensionError(f"time index {t} outside 0..{n - 1}")
    fam = _family(fit)
    if fam == "semiparametric":
        return _tilted_weights(fit, t)
    from scipy.stats import nbinom, poisson

    mu = fit.state.mu[t]
    if fam == "poisson":
        dist = poisson(mu)
    else:
        alpha = fit.params.aux
        dist = nbinom(alpha, alpha / (alpha + mu))
    ymax = int(dist.ppf(1.0 - _TAIL))
    while dist.cdf(ymax) < 1.0 - _TAIL:
        ymax += 1
    vals = np.arange(ymax + 1, dtype=float)
    return vals, dist.pmf(vals)


def _pit_bounds(fit, t, y_t):
    """(P_lo, P_hi) = predictive cdf just below and at the observed count."""
    fam = _family(fit)
    if fam == "semiparametric":
        vals, probs = _tilted_weights(fit, t)
        hi = float(probs[vals <= y_t].sum())
        lo = float(probs[vals < y_t].sum())
        return lo, hi
    from scipy.stats import nbinom, poisson

    mu = fit.state.mu[t]
    if fam == "poisson":
        dist = poisson(mu)
    else:
        alpha = fit.params.aux
        dist = nbinom(alpha, alpha / (alpha + mu))
    hi = float(dist.cdf(y_t))
    lo = float(dist.cdf(y_t - 1)) if y_t >= 1 else 0.0
    return lo, hi


@dataclass(frozen=True)
class PitHistogram:
    """Aggregate PIT of a fit, binned.

    ``heights`` average 1 when the predictive distributions match the
    data; ``mean_pit`` is the aggregate cdf on the bin grid.
    """

    bins: int
    nobs: int
    heights: np.ndarray
    mean_pit: np.ndarray
    degenerate_count: int
    warnings: tuple = ()

    @property
    def sup_deviation(self):
        """Largest absolute departure of a bin height from 1."""
        return float(np.abs(self.heights - 1.0).max())

    def chi2_uniformity(self):
        """Pearson statistic of the binned PIT against the uniform.

        Expected count per bin is nobs/bins; the aggregate transform
        spreads mass across bins, so under a correct model this runs
        conservative relative to the chi-square reference.
        """
        return float(np.sum((self.heights - 1.0) ** 2)) * self.nobs / self.bins

    def summary(self):
        lines = [f"PIT histogram ({self.bins} bins): "
                 f"sup deviation {self.sup_deviation:.4f}"]
        for j, h in enumerate(self.heights):
            lo = j / self.bins
            hi = (j + 1) / self.bins
            bar = "#" * int(round(20 * h))
            lines.append(f"  [{lo:.2f},{hi:.2f})  {h:6.3f}  {bar}")
        if self.degenerate_count:
            lines.append(f"  warning: {self.degenerate_count} observations "
                         "had zero predictive mass (step carried at P_lo)")
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        return "\n".join(lines)


def pit_histogram(fit, bins=DEFAULT_BINS):
    """Nonrandomized PIT histogram of a fitted model.

    For each observation the discrete predictive cdf is bridged
    linearly across the observed count's probability mass; the bridges
    are averaged and differenced on a uniform grid of ``bins`` cells.
    Observations with zero predictive mass at the observed value (a
    defect of the fit, not the transform) contribute a unit step at
    P_lo and are counted in ``degenerate_count``.
    """
    if bins < 1:
        raise DimensionError("bins must be a positive count")
    y = fit.ts.y
    n = len(y)
    lo = np.empty(n)
    hi = np.empty(n)
    for t in range(n):
        lo[t], hi[t] = _pit_bounds(fit, t, y[t])
    span = hi - lo
    degenerate = span <= 0.0
    n_deg = int(degenerate.sum())
    safe = np.where(degenerate, 1.0, span)

    grid = np.linspace(0.0, 1.0, bins + 1)
    mean_pit = np.empty(bins + 1)
    for k, u in enumerate(grid):
        frac = np.clip((u - lo) / safe, 0.0, 1.0)
        if n_deg:
            frac = np.where(degenerate, (u >= lo).astype(float), frac)
        mean_pit[k] = frac.mean()
    # endpoints are exact by construction; pin them against roundoff
    mean_pit[0] = 0.0
    mean_pit[-1] = 1.0
    heights = np.diff(mean_pit) * bins
    warn = ()
    if n_deg:
        warn = (f"{n_deg} zero-mass observations in the PIT transform",)
    return PitHistogram(bins=int(bins), nobs=n, heights=heights,
                        mean_pit=mean_pit, degenerate_count=n_deg,
                        warnings=warn)
