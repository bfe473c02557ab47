"""Pure and compiled kernels must agree elementwise to rounding noise."""

import numpy as np
import pytest

from tiltseries import _pure
from tiltseries.backend import backend_name, get_backend

try:
    from tiltseries import _core
    HAVE_CORE = True
except ImportError:
    HAVE_CORE = False

needs_core = pytest.mark.skipif(not HAVE_CORE,
                                reason="compiled backend not built")

TOL = 1e-11


def random_case(rng, n1=None):
    n1 = n1 or int(rng.integers(30, 80))
    q = int(rng.integers(1, 4))
    X = np.ones((n1, q))
    if q > 1:
        X[:, 1:] = rng.normal(0.0, 0.4, (n1, q - 1))
    beta = rng.normal(0.0, 0.2, q)
    beta[0] = rng.uniform(0.2, 0.9)
    if rng.integers(0, 2):
        ar = np.array([1], dtype=np.int64)
        phi = np.array([0.2])
    else:
        ar = np.array([], dtype=np.int64)
        phi = np.array([])
    ma = np.array([1, 2], dtype=np.int64) if rng.integers(0, 2) else \
        np.array([1], dtype=np.int64)
    psi = rng.uniform(-0.3, 0.3, ma.size)
    y = rng.poisson(2.0, n1).astype(float)
    if y.max() == y.min():
        y[0] += 3.0
    lam = 0.5 if rng.integers(0, 4) else 0.25
    return y, X, beta, ar, phi, ma, psi, lam


def test_backend_selector_names():
    assert backend_name() in ("pure", "compiled")
    assert get_backend("pure").NAME == "pure"
    if HAVE_CORE:
        assert get_backend("compiled").NAME == "compiled"


@needs_core
def test_family_codes_match():
    assert _core.FAMILY_POISSON == _pure.FAMILY_POISSON
    assert _core.FAMILY_NEGBIN == _pure.FAMILY_NEGBIN
    assert _core.FAMILY_TILTED == _pure.FAMILY_TILTED


@needs_core
def test_tilt_stats_and_weights_agree():
    rng = np.random.default_rng(31)
    for _ in range(300):
        n = int(rng.integers(2, 40))
        atoms = rng.normal(2.0, 3.0, n)
        masses = rng.dirichlet(np.ones(n))
        th = float(rng.normal(0, 2))
        b1, m1, v1 = _pure.tilt_stats(atoms, masses, th)
        b2, m2, v2 = _core.tilt_stats(atoms, masses, th)
        assert abs(b1 - b2) < TOL
        assert abs(m1 - m2) < TOL
        assert abs(v1 - v2) < TOL
        w1 = _pure.tilt_weights(atoms, masses, th)
        w2 = _core.tilt_weights(atoms, masses, th)
        assert np.abs(w1 - w2).max() < TOL


@needs_core
def test_solve_tilt_agrees():
    rng = np.random.default_rng(32)
    for _ in range(300):
        n = int(rng.integers(2, 40))
        atoms = rng.normal(2.0, 3.0, n)
        masses = rng.dirichlet(np.ones(n))
        lo, hi = atoms.min(), atoms.max()
        mu = lo + (hi - lo) * rng.uniform(0.02, 0.98)
        warm = float(rng.normal(0, 1))
        s1, t1 = _pure.solve_tilt(atoms, masses, mu, warm=warm)
        s2, t2 = _core.solve_tilt(atoms, masses, mu, warm=warm)
        assert s1 == s2
        if s1 == 0:
            assert abs(t1 - t2) < 1e-10


@needs_core
def test_solve_tilt_status_codes_agree_off_hull():
    atoms = np.array([0.0, 1.0, 4.0])
    masses = np.array([0.3, 0.3, 0.4])
    for mu in (-1.0, 0.0, 4.0, 9.0):
        s1, _ = _pure.solve_tilt(atoms, masses, mu)
        s2, _ = _core.solve_tilt(atoms, masses, mu)
        assert s1 == s2 != 0


@needs_core
def test_recurse_agrees_all_families():
    rng = np.random.default_rng(33)
    dummy = np.array([0.5, 0.5])
    for rep in range(40):
        y, X, beta, ar, phi, ma, psi, lam = random_case(rng)
        n1 = y.shape[0]
        masses = rng.dirichlet(np.ones(n1) * 5)
        cases = [
            (_pure.FAMILY_POISSON, 1.0, dummy, dummy),
            (_pure.FAMILY_NEGBIN, float(rng.uniform(1, 6)), dummy, dummy),
            (_pure.FAMILY_TILTED, 1.0, y, masses),
        ]
        for fam, alpha, atoms, m in cases:
            r1 = _pure.recurse(y, X, beta, ar, phi, ma, psi, lam,
                               fam, alpha, atoms, m)
            r2 = _core.recurse(y, X, beta, ar, phi, ma, psi, lam,
                               fam, alpha, atoms, m)
            assert r1[0] == r2[0] and r1[1] == r2[1]
            if r1[0] != 0:
                continue
            for a1, a2 in zip(r1[2:], r2[2:]):
                d = np.abs(np.asarray(a1) - np.asarray(a2))
                d = d[~np.isnan(d)]
                if d.size:
                    assert d.max() < TOL


@needs_core
def test_parametric_loglik_agrees():
    rng = np.random.default_rng(34)
    for _ in range(40):
        y, X, beta, ar, phi, ma, psi, lam = random_case(rng)
        for fam, alpha in ((0, 1.0), (1, float(rng.uniform(1, 6)))):
            l1 = _pure.parametric_loglik(y, X, beta, ar, phi, ma, psi,
                                         lam, fam, alpha)
            l2 = _core.parametric_loglik(y, X, beta, ar, phi, ma, psi,
                                         lam, fam, alpha)
            assert l1[0] == l2[0]
            if l1[0] == 0:
                assert abs(l1[2] - l2[2]) < 1e-10 * max(1.0, abs(l1[2]))


@needs_core
def test_sp_objective_value_and_gradient_agree():
    rng = np.random.default_rng(35)
    for _ in range(30):
        y, X, beta, ar, phi, ma, psi, lam = random_case(rng, n1=50)
        logits = rng.normal(0.0, 0.5, y.shape[0] - 1)
        rho = float(10.0 ** rng.integers(1, 4))
        nu = float(rng.normal(0, 5))
        o1 = _pure.sp_objective(y, X, beta, ar, phi, ma, psi, lam,
                                logits, rho, nu, True)
        o2 = _core.sp_objective(y, X, beta, ar, phi, ma, psi, lam,
                                logits, rho, nu, True)
        assert o1[0] == o2[0] and o1[1] == o2[1]
        if o1[0] != 0:
            continue
        scale = max(1.0, abs(o1[2]))
        assert abs(o1[2] - o2[2]) < 1e-11 * scale
        gscale = max(1.0, np.abs(o1[3]).max())
        assert np.abs(o1[3] - o2[3]).max() < 1e-10 * gscale
        assert abs(o1[4] - o2[4]) < 1e-11
        assert abs(o1[5] - o2[5]) < 1e-11 * max(1.0, abs(o1[5]))


@needs_core
def test_softmax_pinned_agrees():
    rng = np.random.default_rng(36)
    for _ in range(100):
        logits = rng.normal(0, 3, int(rng.integers(1, 60)))
        p1 = _pure._softmax_pinned(logits)
        p2 = _core._softmax_pinned(logits)
        assert np.abs(p1 - p2).max() < 1e-14
        assert abs(p2.sum() - 1.0) < 1e-12


@needs_core
def test_residual_scale_agrees():
    rng = np.random.default_rng(37)
    for _ in range(50):
        v = float(rng.uniform(0.1, 9.0))
        for lam in (0.5, 1.0, 0.25):
            assert _pure._residual_scale(v, lam) == pytest.approx(
                _core._residual_scale(v, lam), abs=1e-15)


@needs_core
def test_read_only_inputs_are_accepted():
    # TimeSeries freezes its arrays; the compiled kernels must accept them
    y = np.array([1.0, 0.0, 2.0, 1.0, 3.0, 0.0, 1.0])
    X = np.ones((7, 1))
    y.setflags(write=False)
    X.setflags(write=False)
    beta = np.array([0.3])
    ar = np.array([], dtype=np.int64)
    ma = np.array([1], dtype=np.int64)
    r = _core.recurse(y, X, beta, ar, np.array([]), ma, np.array([0.2]),
                      0.5, 0, 1.0, np.array([0.5, 0.5]),
                      np.array([0.5, 0.5]))
    assert r[0] == 0
