"""Core domain types shared by every model in the package.

All containers here are immutable after construction (arrays are copied and
marked read-only) and therefore safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BoundsError,
    DimensionError,
    NonFiniteError,
    NonIntegerCountError,
)

__all__ = [
    "TimeSeries",
    "MeanModelSpec",
    "ModelParams",
    "ParamBounds",
    "FittedState",
    "validate_dataset",
]


def _frozen_array(a, ndim, dtype=float):
    out = np.array(a, dtype=dtype, copy=True)
    if out.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TimeSeries:
    """Observed responses with a covariate matrix, indexed t = 0..n.

    Parameters
    ----------
    y : array_like
        Responses, length n+1.
    x : array_like
        Covariates, shape (n+1, q).
    labels : list of str, optional
        Covariate column names; defaults to ``x0..x{q-1}``.
    """

    y: np.ndarray
    x: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen_array(self.y, 1))
        object.__setattr__(self, "x", _frozen_array(self.x, 2))
        if self.y.shape[0] != self.x.shape[0]:
            raise DimensionError(
                f"y has {self.y.shape[0]} rows but x has {self.x.shape[0]}"
            )
        if self.y.shape[0] == 0:
            raise DimensionError("empty series")
        if self.labels is not None:
            labels = tuple(str(c) for c in self.labels)
            if len(labels) != self.x.shape[1]:
                raise DimensionError(
                    f"{len(labels)} labels for {self.x.shape[1]} covariate columns"
                )
            object.__setattr__(self, "labels", labels)

    @property
    def nobs(self) -> int:
        return self.y.shape[0]

    @property
    def ncov(self) -> int:
        return self.x.shape[1]

    def column_labels(self) -> tuple[str, ...]:
        if self.labels is not None:
            return self.labels
        return tuple(f"x{j}" for j in range(self.ncov))


@dataclass(frozen=True)
class MeanModelSpec:
    """Regression design plus ARMA lag structure for the conditional mean.

    The conditional mean is ``mu_t = exp(x_t' beta + Z_t)`` where ``Z_t``
    carries the ARMA recursion in scaled past residuals
    ``e_t = (y_t - mu_t) / var_t**lam``.

    Parameters
    ----------
    q : int
        Number of regression coefficients (covariate columns).
    ar_lags, ma_lags : iterable of int
        Positive AR / MA lag indices; duplicates are rejected.
    lam : float
        Residual exponent in (0, 1]. ``0.5`` gives Pearson-scaled
        residuals, ``1.0`` score-type residuals.
    link : str
        Only ``"log"`` is supported.
    """

    q: int
    ar_lags: tuple[int, ...] = ()
    ma_lags: tuple[int, ...] = ()
    lam: float = 0.5
    link: str = "log"

    def __post_init__(self):
        if self.q < 1:
            raise DimensionError("q must be at least 1")
        for name in ("ar_lags", "ma_lags"):
            lags = tuple(int(v) for v in getattr(self, name))
            if any(v < 1 for v in lags):
                raise DimensionError(f"{name} must be positive integers")
            if len(set(lags)) != len(lags):
                raise DimensionError(f"duplicate entries in {name}")
            object.__setattr__(self, name, tuple(sorted(lags)))
        if not (0.0 < self.lam <= 1.0):
            raise BoundsError(f"lam must lie in (0, 1], got {self.lam}")
        if self.link != "log":
            raise NotImplementedError("only the log link is implemented")

    @property
    def max_lag(self) -> int:
        return max(self.ar_lags + self.ma_lags, default=0)

    @property
    def n_arma(self) -> int:
        return len(self.ar_lags) + len(self.ma_lags)

    def param_names(self, labels=None) -> tuple[str, ...]:
        """Names for the stacked parameter vector (beta, phi, psi)."""
        if labels is None:
            labels = tuple(f"x{j}" for j in range(self.q))
        names = list(labels)
        names += [f"ar_lag{v}" for v in self.ar_lags]
        names += [f"ma_lag{v}" for v in self.ma_lags]
        return tuple(names)


@dataclass(frozen=True)
class ParamBounds:
    """Box bounds keeping the optimizer inside a compact parameter set.

    Defaults are wide enough never to bind in practice: ``|beta_j| <= 50``,
    each ARMA coefficient in (-0.99, 0.99), and the auxiliary dispersion
    in (1e-3, 1e3).
    """

    beta_abs: float = 50.0
    arma_abs: float = 0.99
    aux_lo: float = 1e-3
    aux_hi: float = 1e3

    def check(self, params: "ModelParams") -> None:
        if np.any(np.abs(params.beta) > self.beta_abs):
            raise BoundsError("beta outside box bounds")
        arma = np.concatenate([params.phi, params.psi])
        if arma.size and np.any(np.abs(arma) > self.arma_abs):
            raise BoundsError("ARMA coefficient outside box bounds")
        if params.aux is not None and not (self.aux_lo <= params.aux <= self.aux_hi):
            raise BoundsError("dispersion outside box bounds")


@dataclass(frozen=True)
class ModelParams:
    """Stacked mean-model parameters: regression, AR, MA and dispersion."""

    beta: np.ndarray
    phi: np.ndarray = field(default_factory=lambda: np.empty(0))
    psi: np.ndarray = field(default_factory=lambda: np.empty(0))
    aux: float | None = None

    def __post_init__(self):
        for name in ("beta", "phi", "psi"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), 1))
        values = np.concatenate([self.beta, self.phi, self.psi])
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("non-finite model parameter")
        if self.aux is not None:
            aux = float(self.aux)
            if not np.isfinite(aux) or aux <= 0.0:
                raise BoundsError(f"aux must be a positive float, got {aux}")
            object.__setattr__(self, "aux", aux)

    def stacked(self) -> np.ndarray:
        """(beta, phi, psi) as one vector, excluding ``aux``."""
        return np.concatenate([self.beta, self.phi, self.psi])

    @classmethod
    def from_stacked(cls, values, spec: MeanModelSpec, aux=None) -> "ModelParams":
        values = np.asarray(values, dtype=float)
        q = spec.q
        s = len(spec.ar_lags)
        if values.shape != (q + s + len(spec.ma_lags),):
            raise DimensionError("stacked parameter vector has wrong length")
        return cls(values[:q], values[q : q + s], values[q + s :], aux=aux)


@dataclass(frozen=True)
class FittedState:
    """Per-time state produced by the mean recursion.

    All vectors have length n+1: ``W`` (linear state), ``Z`` (ARMA
    component), ``e`` (scaled residuals), ``mu`` (conditional means),
    ``var`` (conditional variances), ``b`` and ``theta`` (per-time
    normalizers and tilts; NaN for parametric fits, which have no
    free tilt).
    """

    W: np.ndarray
    Z: np.ndarray
    e: np.ndarray
    mu: np.ndarray
    var: np.ndarray
    b: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        n = None
        for name in ("W", "Z", "e", "mu", "var", "b", "theta"):
            arr = _frozen_array(getattr(self, name), 1)
            object.__setattr__(self, name, arr)
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DimensionError("state vectors have unequal lengths")

    @property
    def nobs(self) -> int:
        return self.W.shape[0]

    def validate(self, semiparametric: bool = False) -> None:
        """Assert the state invariants; raises on violation."""
        if not (np.all(self.mu > 0.0) and np.all(self.var > 0.0)):
            raise NonFiniteError("conditional means/variances must be positive")
        for name in ("W", "Z", "e", "mu", "var"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFiniteError(f"non-finite entries in state vector {name}")
        if semiparametric:
            if self.b[0] != 0.0 or self.theta[0] != 0.0:
                raise BoundsError("gauge requires b_0 = theta_0 = 0")
            if not (np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.theta))):
                raise NonFiniteError("non-finite tilts")


def validate_dataset(
    ts: TimeSeries, spec: MeanModelSpec, counts: bool = True
) -> TimeSeries:
    """Check a dataset against a model specification.

    Returns ``ts`` unchanged when every invariant holds, so the call is
    idempotent.  Raises :class:`DimensionError`, :class:`NonFiniteError`
    or :class:`NonIntegerCountError` otherwise.

    Parameters
    ----------
    ts : TimeSeries
    spec : MeanModelSpec
    counts : bool
        When True (count models), every response must be a nonnegative
        integer.
    """
    if ts.ncov != spec.q:
        raise DimensionError(
            f"spec expects q={spec.q} covariate columns, dataset has {ts.ncov}"
        )
    if ts.nobs < spec.max_lag + 1:
        raise DimensionError(
            f"series of length {ts.nobs} is shorter than max lag "
            f"{spec.max_lag} + 1"
        )
    if not np.all(np.isfinite(ts.y)):
        raise NonFiniteError("missing or non-finite value in y")
    if not np.all(np.isfinite(ts.x)):
        raise NonFiniteError("missing or non-finite value in x")
    if counts:
        if np.any(ts.y < 0) or np.any(ts.y != np.floor(ts.y)):
            raise NonIntegerCountError("non-integer count in y")
    return ts
