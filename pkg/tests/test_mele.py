"""Semiparametric maximum empirical likelihood estimation."""

import numpy as np
import pytest

from tiltseries import _pure
from tiltseries.data import MeanModelSpec, ModelParams, TimeSeries
from tiltseries.mele import (
    empirical_loglik,
    fit_semiparametric,
    loglik_at,
    mele_cdf,
)
from tiltseries.simulation import SimSpec, default_params, model_spec, simulate
from tiltseries.tilt import AtomicDistribution


def test_intercept_only_attains_uniform_mass_optimum():
    # With mu_t constant and equal to the p-mean, every tilt is zero,
    # so the optimum is p uniform with loglik -(n+1) log(n+1).
    rng = np.random.default_rng(40)
    n1 = 40
    y = rng.poisson(2.0, n1).astype(float)
    ts = TimeSeries(y=y, x=np.ones((n1, 1)))
    spec = MeanModelSpec(q=1, lam=0.5)
    fit = fit_semiparametric(ts, spec)
    bound = -n1 * np.log(n1)
    assert fit.converged
    assert fit.loglik <= bound + 1e-9
    assert fit.loglik > bound - 1e-4
    assert np.abs(fit.dist.masses - 1.0 / n1).max() < 1e-3
    assert abs(np.exp(fit.params.beta[0]) - y.mean()) < 1e-3
    assert abs(fit.gauge_residual) < 5e-6


def test_masses_form_a_distribution_and_satisfy_gauge(small_series):
    ts, spec = small_series
    fit = fit_semiparametric(ts, spec)
    assert fit.converged
    p = fit.dist.masses
    assert abs(p.sum() - 1.0) < 1e-10
    assert p.min() >= 1e-12
    # gauge: p-mean equals mu_0
    assert abs(float(p @ ts.y) - fit.state.mu[0]) < 1e-6
    assert fit.state.theta[0] == 0.0
    assert fit.state.b[0] == 0.0


def test_adjoint_gradient_matches_numeric_difference(small_series):
    ts, spec = small_series
    rng = np.random.default_rng(41)
    n1 = ts.nobs
    logits = rng.normal(0.0, 0.3, n1 - 1)
    beta = np.array([0.4])
    psi = np.array([0.15])
    ar = np.array([], dtype=np.int64)
    ma = np.array([1], dtype=np.int64)
    rho, nu = 100.0, 1.5

    def value(vec):
        b = vec[:1]
        ps = vec[1:2]
        lg = vec[2:]
        status, _, f, _, _, _ = _pure.sp_objective(
            ts.y, ts.x, b, ar, np.array([]), ma, ps, spec.lam,
            lg, rho, nu, False)
        assert status == 0
        return f

    x = np.concatenate([beta, psi, logits])
    status, _, _, grad, _, _ = _pure.sp_objective(
        ts.y, ts.x, beta, ar, np.array([]), ma, psi, spec.lam,
        logits, rho, nu, True)
    assert status == 0
    num = np.empty_like(x)
    for i in range(x.size):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        num[i] = (value(xp) - value(xm)) / (2 * h)
    scale = max(1.0, np.abs(num).max())
    assert np.abs(grad - num).max() / scale < 5e-6


def test_numeric_gradient_mode_reaches_same_optimum(small_series):
    ts, spec = small_series
    fa = fit_semiparametric(ts, spec, gradient="adjoint")
    fn = fit_semiparametric(ts, spec, gradient="numeric")
    assert abs(fa.loglik - fn.loglik) < 5e-3
    assert np.abs(fa.params.stacked() - fn.params.stacked()).max() < 0.02


def test_fit_recovers_simulation_truth():
    ts = simulate(SimSpec(model_id="M1", n=500, seed=77))
    fit = fit_semiparametric(ts, model_spec("M1"))
    truth = default_params("M1")
    assert fit.converged
    assert abs(fit.params.beta[0] - truth.beta[0]) < 0.15
    assert abs(fit.params.psi[0] - truth.psi[0]) < 0.12


def test_loglik_at_matches_reported_optimum(small_series):
    ts, spec = small_series
    fit = fit_semiparametric(ts, spec)
    ll = loglik_at(ts, spec, fit.params, fit.dist)
    assert abs(ll - fit.loglik) < 1e-8


def test_gauge_shift_leaves_empirical_loglik_invariant():
    # Tilting the base masses by c and shifting every theta by -c is a
    # reparameterization; the empirical log-likelihood cannot move.
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = int(rng.integers(5, 30))
        atoms = rng.integers(0, 12, n).astype(float)
        if np.unique(atoms).size < 2:
            continue
        masses = rng.dirichlet(np.ones(n))
        masses = np.maximum(masses, 1e-10)
        masses /= masses.sum()
        dist = AtomicDistribution(atoms=atoms, masses=masses)
        theta = rng.normal(0.0, 1.0, n)
        base = empirical_loglik(dist, theta)
        c = float(rng.uniform(-2.0, 2.0))
        shifted = masses * np.exp(c * atoms)
        shifted /= shifted.sum()
        dist2 = AtomicDistribution(atoms=atoms, masses=shifted)
        moved = empirical_loglik(dist2, theta - c)
        assert abs(moved - base) < 1e-9 * max(1.0, abs(base))


def test_fixed_target_constrains_the_fit(small_series):
    ts, spec = small_series
    free = fit_semiparametric(ts, spec)
    pinned = fit_semiparametric(ts, spec, fixed={1: 0.0})
    assert pinned.params.psi[0] == 0.0
    assert free.loglik >= pinned.loglik - 1e-7


def test_mele_cdf_steps_to_one(small_series):
    ts, spec = small_series
    fit = fit_semiparametric(ts, spec)
    F = mele_cdf(fit)
    ymax = ts.y.max()
    assert abs(F(ymax) - 1.0) < 1e-10
    assert F(-1.0) == 0.0
    grid = np.arange(0.0, ymax + 1)
    vals = F(grid)
    assert np.all(np.diff(vals) >= -1e-15)
