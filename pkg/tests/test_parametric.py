"""Poisson and negative-binomial maximum likelihood fitting."""

import numpy as np
import pytest

from tiltseries.data import MeanModelSpec, ModelParams, TimeSeries
from tiltseries.parametric import (
    expected_information,
    fit_negbin,
    fit_poisson,
    iwls_poisson_glm,
    numerical_hessian,
)
from tiltseries.simulation import SimSpec, default_params, model_spec, simulate


def test_iwls_matches_closed_form_intercept_model():
    rng = np.random.default_rng(10)
    y = rng.poisson(3.0, 200).astype(float)
    X = np.ones((200, 1))
    beta = iwls_poisson_glm(y, X)
    assert abs(beta[0] - np.log(y.mean())) < 1e-8


def test_iwls_recovers_regression_slope():
    rng = np.random.default_rng(11)
    n = 3000
    x1 = rng.normal(0.0, 1.0, n)
    mu = np.exp(0.4 + 0.3 * x1)
    y = rng.poisson(mu).astype(float)
    X = np.column_stack([np.ones(n), x1])
    beta = iwls_poisson_glm(y, X)
    assert abs(beta[0] - 0.4) < 0.05
    assert abs(beta[1] - 0.3) < 0.05


def test_poisson_fit_no_arma_equals_glm(small_series):
    ts, _ = small_series
    spec = MeanModelSpec(q=1, lam=0.5)
    fit = fit_poisson(ts, spec)
    assert fit.converged
    assert abs(fit.params.beta[0] - np.log(ts.y.mean())) < 1e-6
    # analytic loglik at the optimum
    from scipy.special import gammaln
    m = ts.y.mean()
    ll = float(np.sum(ts.y * np.log(m) - m - gammaln(ts.y + 1)))
    assert abs(fit.loglik - ll) < 1e-8


def test_poisson_fit_recovers_simulation_truth():
    spec_sim = SimSpec(model_id="M1", n=1200, seed=5)
    ts = simulate(spec_sim)
    fit = fit_poisson(ts, model_spec("M1"))
    truth = default_params("M1")
    assert fit.converged
    assert abs(fit.params.beta[0] - truth.beta[0]) < 0.1
    assert abs(fit.params.psi[0] - truth.psi[0]) < 0.1


def test_negbin_fit_recovers_dispersion():
    spec_sim = SimSpec(model_id="M3", n=2000, seed=17)
    ts = simulate(spec_sim)
    fit = fit_negbin(ts, model_spec("M3"))
    truth = default_params("M3")
    assert fit.converged
    assert abs(fit.params.beta[0] - truth.beta[0]) < 0.15
    assert abs(fit.params.phi[0] - truth.phi[0]) < 0.08
    # alpha is the hardest parameter; allow a loose band around 4
    assert 2.0 < fit.params.aux < 8.0


def test_negbin_loglik_exceeds_poisson_on_overdispersed_data():
    spec_sim = SimSpec(model_id="M3", n=500, seed=23)
    ts = simulate(spec_sim)
    spec = model_spec("M3")
    lp = fit_poisson(ts, spec).loglik
    ln = fit_negbin(ts, spec).loglik
    assert ln > lp


def test_expected_information_close_to_numerical_hessian():
    from tiltseries import _pure
    from tiltseries.parametric import _NegativeLoglik

    ts = simulate(SimSpec(model_id="M1", n=800, seed=3))
    spec = model_spec("M1")
    fit = fit_poisson(ts, spec)
    info = expected_information(ts, spec, fit.params, _pure.FAMILY_POISSON,
                                state=fit.state)
    obj = _NegativeLoglik(ts, spec, _pure.FAMILY_POISSON)
    H, _ = numerical_hessian(obj, fit.params.stacked())
    # expected vs observed information: same scale, agreeing diagonals
    rel = np.abs(np.diag(info) - np.diag(H)) / np.abs(np.diag(H))
    assert rel.max() < 0.25
    assert np.all(np.linalg.eigvalsh(info) > 0)


def test_se_reported_and_positive(small_series):
    ts, spec = small_series
    fit = fit_poisson(ts, spec)
    assert fit.se is not None
    assert fit.se.shape == fit.params.stacked().shape
    assert np.all(fit.se > 0)


def test_fixed_parameters_are_respected(small_series):
    ts, spec = small_series
    fit = fit_poisson(ts, spec, fixed={1: 0.1})
    assert fit.params.psi[0] == 0.1
    free = fit_poisson(ts, spec)
    assert free.loglik >= fit.loglik - 1e-9


def test_param_names_follow_spec(polio_ts, polio_spec):
    fit = fit_poisson(polio_ts, polio_spec)
    names = fit.param_names
    assert len(names) == len(fit.params.stacked())
    assert names[0] == "intercept"
    assert any("ma" in n for n in names)
