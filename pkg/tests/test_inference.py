"""Likelihood-ratio tests, equivalent standard errors, intervals."""

import numpy as np
import pytest
from scipy.stats import chi2, norm

from tiltseries.errors import BoundsError, DimensionError
from tiltseries.inference import lrt_single, type1_error_study
from tiltseries.mele import fit_semiparametric
from tiltseries.parametric import fit_poisson
from tiltseries.simulation import SimSpec, model_spec, simulate


def test_lrt_zero_at_the_null_equal_to_estimate(small_series):
    ts, spec = small_series
    fit = fit_poisson(ts, spec)
    res = lrt_single(ts, spec, 1, null_value=float(fit.params.psi[0]),
                     family="poisson", unconstrained=fit)
    assert res.lrt_stat < 1e-4
    assert res.pvalue > 0.99


def test_lrt_structure_poisson(small_series):
    ts, spec = small_series
    res = lrt_single(ts, spec, 1, null_value=0.0, family="poisson")
    # statistic reproduces the two logliks
    assert res.lrt_stat == pytest.approx(
        2.0 * (res.loglik_full - res.loglik_null), abs=1e-9)
    assert res.lrt_stat >= 0.0
    assert res.pvalue == pytest.approx(chi2.sf(res.lrt_stat, 1), abs=1e-12)
    # se_eq inverts the statistic
    if res.lrt_stat > 1e-8:
        se = abs(res.estimate - res.null_value) / np.sqrt(res.lrt_stat)
        assert res.se_eq == pytest.approx(se, rel=1e-10)
    z = norm.ppf(0.975)
    lo, hi = res.ci
    assert lo == pytest.approx(res.estimate - z * res.se_eq, rel=1e-10)
    assert hi == pytest.approx(res.estimate + z * res.se_eq, rel=1e-10)


def test_lrt_semiparametric_runs_and_nests(small_series):
    ts, spec = small_series
    fit = fit_semiparametric(ts, spec)
    res = lrt_single(ts, spec, 1, null_value=0.0, unconstrained=fit)
    assert res.family == "semiparametric"
    assert res.loglik_full >= res.loglik_null - 1e-6
    assert res.param_name == fit.param_names[1]
    assert np.isfinite(res.se_eq)


def test_lrt_interval_covers_truth_on_easy_data():
    ts = simulate(SimSpec(model_id="M1", n=400, seed=91))
    spec = model_spec("M1")
    res = lrt_single(ts, spec, 1, null_value=0.3, family="poisson")
    # psi_hat near 0.3, so the test should not reject a true null
    assert res.pvalue > 0.01


def test_level_validation(small_series):
    ts, spec = small_series
    with pytest.raises(BoundsError):
        lrt_single(ts, spec, 1, family="poisson", level=1.2)
    with pytest.raises(DimensionError):
        lrt_single(ts, spec, 9, family="poisson")


def test_type1_study_requires_enough_reps():
    sim = SimSpec(model_id="M1p", n=60, seed=1)
    with pytest.raises(DimensionError):
        type1_error_study(sim, (0.05,), reps=20, seed=1)


def test_type1_study_runs_small_poisson():
    # Small smoke run with the parametric family; statistical bands
    # for the semiparametric path live in the acceptance tests.
    sim = SimSpec(model_id="M1p", n=100, seed=4)
    rep = type1_error_study(sim, (0.1, 0.05), reps=100, seed=4,
                            family="poisson")
    assert rep.successes + rep.failures == 100
    assert rep.param_name == "x1"
    r10, r5 = rep.rejection_rates
    assert 0.0 <= r5 <= r10 <= 1.0
    assert rep.pvalues.size == rep.successes
    assert np.all((rep.pvalues >= 0) & (rep.pvalues <= 1))
