import numpy as np
import pytest

from tiltseries.data import MeanModelSpec, TimeSeries
from tiltseries.designs import load_polio


@pytest.fixture(scope="session")
def polio():
    return load_polio()


@pytest.fixture(scope="session")
def polio_ts(polio):
    return polio[0]


@pytest.fixture(scope="session")
def polio_spec(polio):
    return polio[1]


def make_poisson_series(seed, n1=60, q=1, ma=(1,), psi=(0.3,), beta0=0.5):
    """Small stationary count series for unit tests (no burn-in)."""
    rng = np.random.default_rng(seed)
    y = rng.poisson(np.exp(beta0), n1).astype(float)
    if y.max() == y.min():
        y[0] += 2.0
    x = np.ones((n1, q))
    if q > 1:
        x[:, 1:] = rng.normal(0.0, 0.3, (n1, q - 1))
    ts = TimeSeries(y=y, x=x)
    spec = MeanModelSpec(q=q, ma_lags=tuple(ma), lam=0.5)
    return ts, spec


@pytest.fixture()
def small_series():
    return make_poisson_series(202)
