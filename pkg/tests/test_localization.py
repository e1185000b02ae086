import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from lhy_lab import localization as loc

L, ELL = 10.0, 1.0


def test_cutoff_values():
    assert loc.q_cutoff(0.0, L, ELL) == 1.0
    assert loc.q_cutoff(L / 2 - ELL, L, ELL) == pytest.approx(1.0)
    assert loc.q_cutoff(L / 2, L, ELL) == pytest.approx(math.cos(math.pi / 4))
    assert loc.q_cutoff(L / 2 + ELL, L, ELL) == pytest.approx(0.0, abs=1e-15)
    assert loc.q_cutoff(L, L, ELL) == 0.0
    with pytest.raises(ValueError):
        loc.q_cutoff(0.0, L, 6.0)


@given(st.floats(-20, 20), st.floats(0.05, 2.0))
def test_cutoff_range_and_symmetry(t, ell):
    q = loc.q_cutoff(t, L, ell)
    assert 0.0 <= q <= 1.0
    assert q == pytest.approx(loc.q_cutoff(-t, L, ell), abs=1e-14)


@given(st.floats(0.05, 2.0))
def test_window_identity(ell):
    assert loc.window_partition_residual(L, ell, n=2001) < 1e-14


def test_derivative_against_finite_difference():
    t = np.linspace(3.9, 6.1, 101)
    h = 1e-6
    fd = (loc.q_cutoff(t + h, L, ELL) - loc.q_cutoff(t - h, L, ELL)) / (2 * h)
    d1, _ = loc.q_derivatives(t, L, ELL)
    assert np.allclose(d1, fd, atol=1e-8)


@pytest.mark.parametrize("name", loc.PERIODIC_FUNCTIONS)
def test_partition_identity(name):
    tf = loc.periodic_function(name, L)
    rep = loc.partition_identity_check(tf, L, ELL)
    assert rep["residual"] < 1e-10
    # independent adaptive quadrature of the left side
    f = lambda t: abs(tf.psi(np.array([t]))[0]) ** 2 * loc.q_cutoff(t, L, ELL) ** 2
    ref = integrate.quad(f, -L / 2 - ELL, L / 2 + ELL, points=[-L / 2 + ELL, L / 2 - ELL],
                         epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    assert rep["lhs"] == pytest.approx(ref, rel=1e-11)


@given(st.floats(0.1, 2.0), st.integers(1, 4))
def test_partition_identity_fourier_modes(ell, k):
    tf = loc.periodic_function("fourier", L, k=k)
    rep = loc.partition_identity_check(tf, L, ell, grid=4000)
    assert rep["residual"] < 1e-9
    assert rep["rhs"] == pytest.approx(L, rel=1e-12)


def test_partition_convergence_order():
    tf = loc.periodic_function("cosine_mix", L)
    res = [loc.partition_identity_check(tf, L, ELL, grid=g)["residual"] for g in (40, 80, 160)]
    orders = [math.log2(res[i] / res[i + 1]) for i in range(2)]
    assert min(orders) > 3.5


@pytest.mark.parametrize("name", loc.PERIODIC_FUNCTIONS)
def test_kinetic_penalty_margin(name):
    rep = loc.kinetic_penalty_check(loc.periodic_function(name, L), L, ELL)
    assert rep["margin"] > 0
    assert rep["measured_constant"] < rep["declared_constant"]


def test_kinetic_penalty_needs_derivative():
    with pytest.raises(TypeError):
        loc.kinetic_penalty_check(lambda t: np.ones_like(t), L, ELL)


@pytest.mark.parametrize("ell", [0.25, 0.5, 1.0, 2.0])
def test_cutoff_gradient_integral(ell):
    # each margin window contributes pi^2 / (16 ell)
    assert loc.cutoff_gradient_integral(L, ell) == pytest.approx(2 * math.pi**2 / (16 * ell), rel=1e-10)


def test_penalty_scales_like_inverse_ell():
    tf = loc.periodic_function("constant", L)
    ells = np.array([0.25, 0.5, 1.0, 2.0])
    pen = [loc.kinetic_penalty_check(tf, L, e)["lhs"] for e in ells]
    slope = np.polyfit(np.log(ells), np.log(pen), 1)[0]
    assert slope == pytest.approx(-1.0, abs=1e-8)


def test_legendre_quadratic():
    x = np.linspace(-1, 1, 2001)
    res = loc.legendre_biconjugate(x, 0.5 * x * x)
    assert res.max_deviation < res.grid_bound
    assert np.max(np.abs(res.f_star - loc.quadratic_conjugate(res.y))) < 1e-6
    assert not res.infinite.any()


def test_legendre_abs():
    x = np.linspace(-1, 1, 401)
    res = loc.legendre_biconjugate(x, np.abs(x))
    assert np.allclose(res.f_star, np.maximum(0.0, np.abs(res.y) - 1.0), atol=1e-12)
    assert res.max_deviation < 1e-12


def test_legendre_linear_unbounded():
    x = np.linspace(-1, 1, 101)
    res = loc.legendre_biconjugate(x, 2 * x + 1, unbounded=True)
    finite = ~res.infinite
    assert np.allclose(res.y[finite], 2.0)
    assert np.all(res.f_star[res.infinite] == loc.INFINITY_SENTINEL)
    assert res.f_star[finite][0] == pytest.approx(-1.0)
    assert res.max_deviation < 1e-12


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=5))
def test_biconjugate_below_function(coefs):
    x = np.linspace(-1, 1, 201)
    f = sum(c * x**k for k, c in enumerate(coefs)) + 0.0 * x
    f = f + (abs(min(0.0, float(np.min(np.diff(f, 2))))) / (x[1] - x[0]) ** 2 + 1.0) * x * x
    try:
        res = loc.legendre_biconjugate(x, f)
    except loc.ConvexityError:
        return
    assert np.all(res.f_star_star <= f + 1e-9)


def test_convexity_error_names_triple():
    x = np.linspace(-1, 1, 11)
    f = -x * x
    with pytest.raises(loc.ConvexityError) as err:
        loc.legendre_biconjugate(x, f)
    (x0, _), (x1, _), (x2, _) = err.value.triple
    assert x0 < x1 < x2 and x1 == pytest.approx(-0.8)


def test_appendix_checks_summary():
    out = loc.appendix_checks(grid=2000, n_legendre=501)
    assert all(v["residual"] < 1e-10 for v in out["partition"].values())
    assert all(v["margin"] > 0 for v in out["kinetic"].values())
    assert out["legendre_quadratic"]["max_deviation"] < out["legendre_quadratic"]["grid_bound"]
