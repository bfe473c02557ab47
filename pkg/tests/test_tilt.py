"""Tilt core: normalizer, moments, root solver, distribution checks."""

import numpy as np
import pytest

from tiltseries.errors import (
    DegenerateSupportError,
    InfeasibleMean,
    NonFiniteError,
)
from tiltseries.tilt import (
    AtomicDistribution,
    solve_tilt,
    tilted_cdf,
    tilted_moments,
    tilted_normalizer,
    tilted_pmf,
    tilted_weights,
)


def random_dist(rng, n_lo=3, n_hi=20):
    n = int(rng.integers(n_lo, n_hi + 1))
    atoms = np.unique(rng.integers(0, 30, n).astype(float))
    while atoms.size < 2:
        atoms = np.unique(rng.integers(0, 30, n).astype(float))
    masses = rng.dirichlet(np.ones(atoms.size))
    masses = np.maximum(masses, 1e-9)
    masses /= masses.sum()
    return AtomicDistribution(atoms=atoms, masses=masses)


def mean_oracle(dist, theta):
    # independent of the kernel code path on purpose
    s = theta * dist.atoms
    w = dist.masses * np.exp(s - s.max())
    w /= w.sum()
    return float(w @ dist.atoms)


def bisect_oracle(dist, mu, lo=-80.0, hi=80.0, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mean_oracle(dist, mid) < mu:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_weights_normalize_and_tilt_zero_is_base():
    rng = np.random.default_rng(1)
    for _ in range(50):
        dist = random_dist(rng)
        w = tilted_weights(dist, 0.0)
        assert abs(w.sum() - 1.0) < 1e-12
        assert np.abs(w - dist.masses).max() < 1e-12
        th = float(rng.normal(0, 2))
        w = tilted_weights(dist, th)
        assert abs(w.sum() - 1.0) < 1e-12
        assert (w >= 0).all()


def test_normalizer_matches_direct_log_sum():
    rng = np.random.default_rng(2)
    for _ in range(50):
        dist = random_dist(rng)
        th = float(rng.normal(0, 1.5))
        b = tilted_normalizer(dist, th)
        direct = -np.log(np.sum(dist.masses * np.exp(th * dist.atoms)))
        assert abs(b - direct) < 1e-10 * max(1.0, abs(direct))


def test_tilted_mean_is_strictly_increasing():
    rng = np.random.default_rng(3)
    dist = random_dist(rng)
    grid = np.linspace(-4, 4, 41)
    means = [tilted_moments(dist, th)[0] for th in grid]
    assert all(b > a for a, b in zip(means, means[1:]))


def test_solver_agrees_with_bisection_oracle():
    rng = np.random.default_rng(4)
    for _ in range(200):
        dist = random_dist(rng)
        lo, hi = dist.hull()
        mu = lo + (hi - lo) * rng.uniform(0.05, 0.95)
        th = solve_tilt(dist, mu)
        th_ref = bisect_oracle(dist, mu)
        assert abs(th - th_ref) < 1e-6
        mean, _ = tilted_moments(dist, th)
        assert abs(mean - mu) < 1e-8 * max(1.0, abs(mu))


def test_solver_round_trip_through_theta():
    rng = np.random.default_rng(5)
    for _ in range(200):
        dist = random_dist(rng)
        th = float(rng.normal(0, 2))
        mu = tilted_moments(dist, th)[0]
        lo, hi = dist.hull()
        if not (lo + 1e-6 < mu < hi - 1e-6):
            continue
        back = solve_tilt(dist, mu, warm=float(rng.normal(0, 1)))
        assert abs(back - th) < 1e-8 * max(1.0, abs(th))


def test_warm_start_does_not_change_the_root():
    rng = np.random.default_rng(6)
    dist = random_dist(rng)
    lo, hi = dist.hull()
    mu = lo + (hi - lo) * 0.37
    roots = [solve_tilt(dist, mu, warm=w) for w in (-5.0, -0.5, 0.0, 2.0, 30.0)]
    assert max(roots) - min(roots) < 1e-9


def test_targets_off_the_hull_are_infeasible():
    dist = AtomicDistribution(
        atoms=np.array([0.0, 1.0, 5.0]),
        masses=np.array([0.2, 0.5, 0.3]),
    )
    with pytest.raises(InfeasibleMean):
        solve_tilt(dist, -0.5)
    with pytest.raises(InfeasibleMean):
        solve_tilt(dist, 5.0)
    with pytest.raises(InfeasibleMean):
        solve_tilt(dist, 7.0)


def test_extreme_targets_near_hull_edge_still_solve():
    dist = AtomicDistribution(
        atoms=np.array([0.0, 1.0, 2.0, 9.0]),
        masses=np.array([0.25, 0.25, 0.25, 0.25]),
    )
    lo, hi = dist.hull()
    for frac in (1e-4, 1e-5):
        mu = hi - frac * (hi - lo)
        th = solve_tilt(dist, mu)
        mean, _ = tilted_moments(dist, th)
        assert abs(mean - mu) < 1e-8 * max(1.0, abs(mu))


def test_pmf_and_cdf_consistency():
    rng = np.random.default_rng(7)
    for _ in range(20):
        dist = random_dist(rng)
        th = float(rng.normal(0, 1))
        total = sum(tilted_pmf(dist, th, a) for a in np.unique(dist.atoms))
        assert abs(total - 1.0) < 1e-12
        ys = np.unique(dist.atoms)
        cdf_vals = [tilted_cdf(dist, th, v) for v in ys]
        assert all(b >= a - 1e-15 for a, b in zip(cdf_vals, cdf_vals[1:]))
        assert abs(cdf_vals[-1] - 1.0) < 1e-12


def test_distribution_validation():
    with pytest.raises(DegenerateSupportError):
        AtomicDistribution(atoms=np.array([2.0, 2.0]),
                           masses=np.array([0.5, 0.5]))
    with pytest.raises(NonFiniteError):
        AtomicDistribution(atoms=np.array([0.0, 1.0]),
                           masses=np.array([0.7, 0.2]))
    with pytest.raises(NonFiniteError):
        AtomicDistribution(atoms=np.array([0.0, np.nan]),
                           masses=np.array([0.5, 0.5]))
    with pytest.raises(NonFiniteError):
        AtomicDistribution(atoms=np.array([0.0, 1.0, 2.0]),
                           masses=np.array([1.0 - 1e-13, 1e-13, 0.0]))


def test_frozen_arrays_cannot_be_mutated():
    dist = AtomicDistribution(atoms=np.array([0.0, 1.0]),
                              masses=np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        dist.atoms[0] = 3.0
