import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import norm, ortho_group

from langevin_mc.metrics import (
    GaussianLaw,
    W2Trace,
    bootstrap_w2_product,
    empirical_w2_product,
    klmc_gaussian_recursion,
    lmc_gaussian_recursion,
    moment_diagnostics,
    w2_gaussian,
)
from langevin_mc.potentials import make_gaussian
from langevin_mc.rng import stream
from langevin_mc.theory import BoundInputs, klmc_bound, lmc_bound


def _spd(B, shift=0.2):
    B = np.asarray(B)
    return B @ B.T + shift * np.eye(B.shape[0])


spd3 = arrays(float, (3, 3), elements=st.floats(-1.5, 1.5)).map(_spd)
vec3 = arrays(float, 3, elements=st.floats(-3, 3))


def test_w2_identical_zero():
    a = GaussianLaw(np.ones(2), np.array([[2.0, 0.3], [0.3, 1.0]]))
    assert w2_gaussian(a, a) == pytest.approx(0.0, abs=1e-7)


def test_w2_1d_and_shift():
    assert w2_gaussian(GaussianLaw(np.zeros(1), np.eye(1)), GaussianLaw(np.zeros(1), 4 * np.eye(1))) == pytest.approx(1.0)
    assert w2_gaussian(GaussianLaw(np.zeros(2), np.eye(2)), GaussianLaw(np.array([3.0, 4.0]), np.eye(2))) == pytest.approx(5.0)


def test_w2_commuting_reduces():
    Q = ortho_group.rvs(3, random_state=1)
    la, lb = np.array([1.0, 2.0, 5.0]), np.array([0.5, 3.0, 2.0])
    a = GaussianLaw(np.zeros(3), (Q * la) @ Q.T)
    b = GaussianLaw(np.ones(3), (Q * lb) @ Q.T)
    ref = math.sqrt(3 + np.sum((np.sqrt(la) - np.sqrt(lb)) ** 2))
    assert w2_gaussian(a, b) == pytest.approx(ref, rel=1e-10)


def test_w2_non_psd_rejected():
    with pytest.raises(ValueError):
        GaussianLaw(np.zeros(2), np.diag([1.0, -1e-6]))
    with pytest.raises(ValueError):
        GaussianLaw(np.zeros(2), np.array([[1.0, 0.5], [0.4, 1.0]]))


@given(vec3, spd3, vec3, spd3)
def test_w2_symmetry(m1, S1, m2, S2):
    a, b = GaussianLaw(m1, S1), GaussianLaw(m2, S2)
    assert w2_gaussian(a, b) == pytest.approx(w2_gaussian(b, a), abs=1e-12 * (1 + w2_gaussian(a, b)) * 10)


@given(vec3, spd3, vec3, spd3, vec3, spd3)
def test_w2_triangle(m1, S1, m2, S2, m3, S3):
    a, b, c = GaussianLaw(m1, S1), GaussianLaw(m2, S2), GaussianLaw(m3, S3)
    assert w2_gaussian(a, c) <= w2_gaussian(a, b) + w2_gaussian(b, c) + 1e-9


# --- LMC recursion -----------------------------------------------------

def test_lmc_fixed_point_constant_trace():
    lam, h = np.array([1.0, 4.0]), 0.1
    stat_var = 2 * h / (1 - (1 - h * lam) ** 2)
    tr = lmc_gaussian_recursion(np.diag(lam), np.zeros(2), h, GaussianLaw(np.zeros(2), np.diag(stat_var)), 50)
    np.testing.assert_allclose(tr.w2_exact, tr.w2_exact[0], rtol=1e-12)


def test_lmc_plateau_scalar_oracle():
    tr = lmc_gaussian_recursion(np.eye(1), np.zeros(1), 0.1, GaussianLaw.point(np.zeros(1)), 2000)
    assert tr.final_law.cov[0, 0] == pytest.approx(2 / 1.9, rel=1e-13)
    assert tr.w2_exact[-1] == pytest.approx(math.sqrt(2 / 1.9) - 1, rel=1e-12)
    assert tr.w2_exact[-1] == pytest.approx(0.0259795, abs=2e-6)


def test_lmc_trace_below_bound():
    A = np.diag([1.0, 3.0, 8.0])
    h, n = 0.02, 1500
    tr = lmc_gaussian_recursion(A, np.zeros(3), h, GaussianLaw.point(np.zeros(3)), n)
    w0 = math.sqrt(np.sum(1 / np.diag(A)))
    bnd = [lmc_bound(BoundInputs(1.0, 8.0, 3, h, int(k), w0)).total for k in tr.n]
    assert np.all(tr.w2_exact <= bnd)


def test_lmc_general_path_agrees():
    A = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
    init = GaussianLaw(np.ones(3), np.diag([0.3, 0.1, 0.2]))
    a = lmc_gaussian_recursion(A, np.zeros(3), 0.05, init, 200, every=10)
    init2 = GaussianLaw(np.ones(3), np.array([[0.3, 0.05, 0], [0.05, 0.1, 0], [0, 0, 0.2]]))
    b = lmc_gaussian_recursion(A, np.zeros(3), 0.05, init2, 200, every=10)
    c = lmc_gaussian_recursion(A, np.zeros(3), 0.05, init2, 200, every=10, force_general=True)
    np.testing.assert_allclose(b.w2_exact, c.w2_exact, rtol=1e-10)
    assert list(a.n) == list(range(0, 201, 10))


def test_recursions_rotation_invariant():
    lam = np.array([1.0, 2.5, 6.0])
    Q = ortho_group.rvs(3, random_state=7)
    A0, A1 = np.diag(lam), (Q * lam) @ Q.T
    mu0 = np.array([0.5, -1.0, 2.0])
    S0 = np.diag([0.2, 0.4, 0.1])
    t0 = lmc_gaussian_recursion(A0, np.zeros(3), 0.05, GaussianLaw(mu0, S0), 100)
    t1 = lmc_gaussian_recursion(A1, np.zeros(3), 0.05, GaussianLaw(Q @ mu0, Q @ S0 @ Q.T), 100)
    np.testing.assert_allclose(t0.w2_exact, t1.w2_exact, atol=1e-10)
    np.testing.assert_allclose(Q @ t0.final_law.mean, t1.final_law.mean, atol=1e-10)
    Q2 = np.kron(np.eye(2), Q)
    J0 = GaussianLaw(np.concatenate([mu0, np.zeros(3)]), np.diag([0.2, 0.4, 0.1, 4, 4, 4]))
    J1 = GaussianLaw(Q2 @ J0.mean, Q2 @ J0.cov @ Q2.T)
    k0 = klmc_gaussian_recursion(A0, np.zeros(3), 4.0, 0.02, J0, 100)
    k1 = klmc_gaussian_recursion(A1, np.zeros(3), 4.0, 0.02, J1, 100)
    np.testing.assert_allclose(k0.w2_exact, k1.w2_exact, atol=1e-10)


# --- KLMC recursion ----------------------------------------------------

def test_klmc_blocks_match_full():
    A = np.diag([1.0, 4.0, 9.0])
    a = klmc_gaussian_recursion(A, np.zeros(3), 5.0, 0.01, None, 300, every=30)
    b = klmc_gaussian_recursion(A, np.zeros(3), 5.0, 0.01, None, 300, every=30, force_general=True)
    np.testing.assert_allclose(a.w2_exact, b.w2_exact, rtol=1e-12, atol=1e-14)


def test_klmc_plateau_below_discretization_term():
    A = np.diag([1.0, 3.0, 10.0])
    gamma, h = 50.0, 0.001
    tr = klmc_gaussian_recursion(A, np.zeros(3), gamma, h, None, 20_000, every=1000)
    assert np.all(np.isfinite(tr.w2_exact))
    disc = 0.9 * gamma * h * math.sqrt(10.0 * 3)
    assert tr.w2_exact[-1] <= disc
    assert abs(tr.w2_exact[-1] - tr.w2_exact[-2]) < 1e-6


def test_klmc_trace_below_bound_curve():
    A = np.diag([1.0, 5.0])
    gamma, h = 25.0, 0.1 / (math.sqrt(5.0) * 25.0)
    tr = klmc_gaussian_recursion(A, np.zeros(2), gamma, h, None, 3000)
    w0 = math.sqrt(1 + 0.2)
    bnd = np.array([klmc_bound(BoundInputs(1.0, 5.0, 2, h, int(k), w0, 0.0, gamma)).total for k in tr.n])
    assert np.all(tr.w2_exact <= bnd)


def test_klmc_bad_init_dimension():
    with pytest.raises(ValueError):
        klmc_gaussian_recursion(np.eye(2), np.zeros(2), 5.0, 0.01, GaussianLaw(np.zeros(2), np.eye(2)), 3)


def test_w2trace_csv():
    tr = W2Trace([0, 1], [1.0, 0.5], bound_total=[2.0, 1.0], valid=True)
    assert tr.dominated()
    assert tr.to_csv().splitlines() == ["n,w2_exact,bound_total,valid", "0,1.0,2.0,true", "1,0.5,1.0,true"]
    with pytest.raises(ValueError):
        W2Trace([0, 1], [1.0])


# --- empirical W2 ------------------------------------------------------

def test_empirical_constant_shift():
    x = np.zeros((2, 1))
    assert empirical_w2_product(x, [lambda q: np.ones_like(q)]) == pytest.approx(1.0)


def test_empirical_non_product_rejected():
    with pytest.raises(ValueError, match="w2_gaussian"):
        empirical_w2_product(np.zeros((10, 2)), GaussianLaw(np.zeros(2), np.array([[1.0, 0.5], [0.5, 1.0]])))


def test_empirical_self_distance():
    R = 100_000
    x = stream(0).standard_normal((R, 2)) * [1.0, 2.0] + [0.0, 1.0]
    target = GaussianLaw(np.array([0.0, 1.0]), np.diag([1.0, 4.0]))
    est, se, _ = bootstrap_w2_product(x, target, n_boot=100, rng=stream(1))
    assert est <= 3 * se + 0.02


def test_empirical_1d_bias_covered():
    R = 100_000
    x = stream(2).standard_normal((R, 1))
    est, se, reps = bootstrap_w2_product(x, GaussianLaw(np.zeros(1), np.eye(1)), n_boot=200, rng=stream(3))
    assert 0 < est <= 0.02
    lo, hi = np.quantile(reps, [0.005, 0.995])
    assert lo <= est <= hi and se > 0


def test_empirical_converges_to_gaussian_w2():
    nu = GaussianLaw(np.array([0.3, -0.2]), np.diag([1.5, 0.6]))
    pi = GaussianLaw(np.zeros(2), np.diag([1.0, 1.0]))
    exact = w2_gaussian(nu, pi)
    errs = []
    rng = stream(4)
    for R in (10**3, 10**4, 10**5):
        trials = [abs(empirical_w2_product(rng.standard_normal((R, 2)) * np.sqrt([1.5, 0.6]) + nu.mean, pi) - exact)
                  for _ in range(5)]
        errs.append(np.mean(trials))
    assert errs[0] > errs[1] > errs[2]


def test_quantile_callable_targets():
    x = stream(5).uniform(size=(50_000, 1))
    assert empirical_w2_product(x, [lambda q: q]) < 0.01
    assert empirical_w2_product(x[:, 0], [norm(loc=0.5, scale=0.01).ppf]) < 0.3


def test_moment_diagnostics():
    m, c, ef = moment_diagnostics(np.full((10, 3), 2.0))
    assert np.all(c == 0) and ef is None
    R = 100_000
    x = stream(6).standard_normal((R, 3))
    m, c, ef = moment_diagnostics(x, make_gaussian(np.eye(3)))
    assert np.all(np.abs(m) <= 3 / math.sqrt(R))
    assert ef == pytest.approx(1.5, abs=3 * math.sqrt(1.5 / R) * 1.5)
