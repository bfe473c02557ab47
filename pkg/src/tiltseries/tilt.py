"""Exponential tilting over an atomic distribution.

An :class:`AtomicDistribution` keeps one atom per observation
(duplicates retained) with masses summing to one.  Tilting by ``theta``
reweights mass ``p_j`` to ``p_j * exp(b + theta * y_j)`` where ``b`` is
the log-normalizer; :func:`solve_tilt` inverts the tilted mean.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _pure
from .backend import active
from .data import _frozen_array
from .errors import (
    STATUS_INFEASIBLE,
    STATUS_THETA_CAP,
    DegenerateSupportError,
    InfeasibleMean,
    NonFiniteError,
    raise_for_status,
)

MASS_FLOOR = 1e-12
THETA_CAP = 500.0
HULL_MARGIN = 1e-8
MEAN_RTOL = 1e-12


@dataclass(frozen=True)
class AtomicDistribution:
    """Finite support ``atoms`` with probability ``masses``.

    Masses must sum to 1 within 1e-12 and each must be at least the
    floor 1e-12; at least two distinct atom values are required.
    """

    atoms: np.ndarray
    masses: np.ndarray
    _lo: float = field(init=False, repr=False)
    _hi: float = field(init=False, repr=False)

    def __post_init__(self):
        atoms = _frozen_array(self.atoms, ndim=1)
        masses = _frozen_array(self.masses, ndim=1)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)
        if atoms.shape != masses.shape:
            raise NonFiniteError(
                f"atoms and masses differ in length: {atoms.shape[0]} vs "
                f"{masses.shape[0]}"
            )
        if not np.isfinite(atoms).all():
            raise NonFiniteError("atoms contain non-finite values")
        if not np.isfinite(masses).all():
            raise NonFiniteError("masses contain non-finite values")
        if masses.min() < MASS_FLOOR:
            raise NonFiniteError(
                f"every mass must be >= {MASS_FLOOR}; min is {masses.min()}"
            )
        if abs(masses.sum() - 1.0) > 1e-12:
            raise NonFiniteError(
                f"masses must sum to 1 within 1e-12; sum is {masses.sum()!r}"
            )
        lo = float(atoms.min())
        hi = float(atoms.max())
        if lo == hi:
            raise DegenerateSupportError(
                "tilting needs at least two distinct atom values"
            )
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    def hull(self):
        """Open interval of feasible target means (min atom, max atom)."""
        return self._lo, self._hi

    def p_mean(self):
        return float(self.masses @ self.atoms)


def tilted_normalizer(dist, theta):
    """Log-normalizer ``b = -log sum_j p_j exp(theta * y_j)``."""
    if not math.isfinite(theta):
        raise NonFiniteError(f"theta must be finite, got {theta!r}")
    b, _, _ = active.tilt_stats(dist.atoms, dist.masses, theta)
    return b


def tilted_moments(dist, theta):
    """Mean and variance of the distribution tilted by ``theta``."""
    if not math.isfinite(theta):
        raise NonFiniteError(f"theta must be finite, got {theta!r}")
    _, mean, var = active.tilt_stats(dist.atoms, dist.masses, theta)
    return mean, var


def solve_tilt(dist, target_mu, warm=0.0):
    """The unique ``theta`` whose tilted mean equals ``target_mu``.

    The achieved mean satisfies
    ``|mean - target_mu| <= 1e-10 * max(1, |target_mu|)``.  Targets on
    or outside the open hull of the atoms (with a relative margin of
    1e-8 per side) raise :class:`InfeasibleMean`, as does a binding
    ``|theta| <= 500`` cap (with ``cap_bound`` set).
    """
    if not math.isfinite(target_mu):
        raise NonFiniteError(f"target mean must be finite, got {target_mu!r}")
    status, theta = active.solve_tilt(
        dist.atoms, dist.masses, float(target_mu), warm=warm,
        rtol=MEAN_RTOL, theta_cap=THETA_CAP, hull_margin=HULL_MARGIN,
    )
    if status == STATUS_THETA_CAP:
        raise InfeasibleMean(
            f"target mean {target_mu!r} needs |theta| beyond the cap "
            f"{THETA_CAP}", cap_bound=True,
        )
    if status == STATUS_INFEASIBLE:
        lo, hi = dist.hull()
        raise InfeasibleMean(
            f"target mean {target_mu!r} outside the open hull "
            f"({lo!r}, {hi!r})"
        )
    raise_for_status(status)
    return theta


def tilted_weights(dist, theta):
    """Tilted probabilities ``w_j = p_j exp(b + theta y_j)`` (sum to 1)."""
    if not math.isfinite(theta):
        raise NonFiniteError(f"theta must be finite, got {theta!r}")
    return _pure.tilt_weights(dist.atoms, dist.masses, theta)


def tilted_cdf(dist, theta, y):
    """Right-continuous cdf of the tilted distribution at ``y``."""
    w = tilted_weights(dist, theta)
    return float(w[dist.atoms <= y].sum())


def tilted_pmf(dist, theta, y):
    """Total tilted mass on atoms exactly equal to ``y``."""
    w = tilted_weights(dist, theta)
    return float(w[dist.atoms == y].sum())
