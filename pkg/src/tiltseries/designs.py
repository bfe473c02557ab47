"""Bundled datasets and their published covariate designs.

`polio_design` and `kingscross_design` build the regression matrices
used in the original analyses of the two monthly count series, so the
same design can be attached to user-supplied response files.
"""

import csv
from importlib import resources

import numpy as np

from .data import MeanModelSpec, TimeSeries

POLIO_LABELS = ("intercept", "trend", "cos12", "sin12", "cos6", "sin6")
KINGSCROSS_LABELS = ("intercept", "step", "cos12")


def polio_design(n=168):
    """Trend plus annual and semiannual harmonics, centered at t = 73.

    Covariates for month t = 1..n:
    ``(1, t'/1000, cos(2 pi t'/12), sin(2 pi t'/12), cos(2 pi t'/6),
    sin(2 pi t'/6))`` with ``t' = t - 73``.
    """
    t = np.arange(1, n + 1, dtype=float) - 73.0
    return np.column_stack([
        np.ones(n),
        t / 1000.0,
        np.cos(2.0 * np.pi * t / 12.0),
        np.sin(2.0 * np.pi * t / 12.0),
        np.cos(2.0 * np.pi * t / 6.0),
        np.sin(2.0 * np.pi * t / 6.0),
    ])


def kingscross_design(n=69):
    """Intercept, step from t = 60 onward, and an annual cosine.

    Covariates for month t = 0..n-1: ``(1, 1(t >= 60), cos(2 pi t/12))``.
    """
    t = np.arange(n, dtype=float)
    return np.column_stack([
        np.ones(n),
        (t >= 60.0).astype(float),
        np.cos(2.0 * np.pi * t / 12.0),
    ])


def design_by_name(name, n):
    """Look up a named design; returns ``(x, labels)``."""
    if name == "polio":
        return polio_design(n), POLIO_LABELS
    if name == "kingscross":
        return kingscross_design(n), KINGSCROSS_LABELS
    raise ValueError(f"unknown design {name!r}; use polio or kingscross")


def load_polio():
    """The bundled monthly polio incidence counts (168 months).

    Returns ``(ts, spec)`` with the published design attached: trend and
    harmonic covariates, MA lags (1, 2, 5), Pearson-scaled residuals.
    """
    ref = resources.files("tiltseries.datasets").joinpath("polio.csv")
    with ref.open("r", encoding="utf-8") as fh:
        y = [float(row["y"]) for row in csv.DictReader(fh)]
    y = np.asarray(y)
    ts = TimeSeries(y, polio_design(y.shape[0]), labels=POLIO_LABELS)
    spec = MeanModelSpec(q=6, ma_lags=(1, 2, 5), lam=0.5)
    return ts, spec
