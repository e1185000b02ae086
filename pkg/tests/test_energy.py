import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from lhy_lab import coefficients, energy, lattice, scattering
from oracles import lhy_integral_mp, naive_integrand_mp


@pytest.mark.parametrize("a", [0.25, 1.0, 3.0])
def test_lhy_integral_against_mp_quadrature(a):
    result = energy.lhy_integral(a)
    oracle = lhy_integral_mp(a)
    assert result["quadrature"] == pytest.approx(oracle, rel=1e-9)
    assert result["closed_form"] == pytest.approx(oracle, rel=1e-9)


def test_lhy_closed_form_value():
    assert energy.lhy_closed_form(1.0) == pytest.approx(512 * math.sqrt(math.pi) / 15, rel=1e-15)
    assert energy.lhy_integral(0.0)["closed_form"] == 0.0
    with pytest.raises(ValueError):
        energy.lhy_integral(-1.0)


@given(st.floats(1e-4, 1e4), st.floats(0.01, 5.0))
def test_stable_integrand_matches_naive(v_sq, a):
    with mpmath.workdps(50):
        ref = float(naive_integrand_mp(mpmath.sqrt(mpmath.mpf(v_sq)), mpmath.mpf(a)))
    assert float(energy.lhy_integrand(v_sq, a)) == pytest.approx(ref, rel=1e-12)


def test_integrand_pole_and_sign():
    with pytest.raises(ValueError):
        energy.lhy_integrand(0.0, 1.0)
    v = np.logspace(-3, 4, 50)
    assert np.all(energy.lhy_integrand(v, 1.0) > 0)


def test_riemann_sum_converges_monotonically():
    devs = [energy.lhy_riemann_sum(1.0, h=h).deviation for h in (0.4, 0.2, 0.1)]
    assert devs[0] > devs[1] > devs[2]
    assert devs[2] < 0.05


def test_riemann_sum_from_N_and_kappa():
    r = energy.lhy_riemann_sum(1.0, N=1e4, kappa=0.55)
    assert r.h == pytest.approx(2 * math.pi * 1e4 ** -0.275)
    assert r.normalized_certificate == pytest.approx(r.h**3 / (2 * math.pi) ** 3 * r.certificate)
    with pytest.raises(ValueError):
        energy.lhy_riemann_sum(1.0)
    with pytest.raises(ValueError):
        energy.lhy_riemann_sum(1.0, h=2.0)


def test_riemann_sum_certificate_refusal():
    with pytest.raises(lattice.CertificateError):
        energy.lhy_riemann_sum(1.0, h=0.4, cutoff=1.0, tol=1e-4)


def test_predicted_bound_and_kappa():
    assert energy.kappa_of_gamma(1.1) == pytest.approx(1.2 / 2.3)
    out = energy.predicted_upper_bound(1e-6, 1.0)
    assert out["main"] == pytest.approx(4 * math.pi * 1e-12 * (1 + energy.LHY_COEFFICIENT * 1e-3))
    assert out["error_exponent"] == pytest.approx(2.6)
    with pytest.raises(ValueError):
        energy.predicted_upper_bound(2.0, 1.0)


@pytest.fixture(scope="module")
def breakdown_1e4(solution_1e4, table_1e4):
    return energy.energy_breakdown(table_1e4, solution_1e4)


def test_breakdown_terms(breakdown_1e4):
    b = breakdown_1e4
    d = b.as_dict()
    for key in energy.EnergyBreakdown.TERM_NAMES + ("relative_residual", "grouped_total", "certificate"):
        assert key in d and math.isfinite(d[key])
    assert abs(b.grouping_gap) < 1e-9 * abs(b.total)
    assert b.terms["mean_field"] > 0 and b.terms["cubic_gain"] <= 0
    assert b.prediction == pytest.approx(energy.lhy_prediction(b.a_scat, 1e4, 0.55))
    assert b.relative_residual == pytest.approx(b.residual / (4 * math.pi * b.a_scat * 1e4**1.55))


def test_breakdown_relative_residual_shrinks(well):
    vals = []
    for N in (1e4, 1e5):
        sol = scattering.solve_neumann(well, 0.4, N, 0.55)
        t = coefficients.build_table(sol, coefficients.MomentumPartition(N, 0.55, 0.01))
        vals.append(abs(energy.energy_breakdown(t, sol).relative_residual))
    assert vals[1] < vals[0]


def test_minimal_admissible_N():
    N = energy.minimal_admissible_N(0.55, 0.01)
    assert N == pytest.approx(632.41, rel=1e-4)
    # independent check: one decade step below has no nonzero r3 in the S window
    below = 10 ** (math.log10(N) - 1e-3)
    lo, hi = below ** 0.53 / (4 * math.pi**2), below ** 0.57 / (4 * math.pi**2)
    counts = lattice.shell_counts(int(hi) + 1).counts
    assert all(counts[n] == 0 for n in range(max(1, math.ceil(lo)), int(math.floor(hi)) + 1))


def test_cubic_sums_refuse_below_admissible(well):
    sol = scattering.solve_neumann(well, 0.4, 100.0, 0.55)
    t = coefficients.build_table(sol, coefficients.MomentumPartition(100.0, 0.55, 0.01))
    with pytest.raises(energy.EnergyError, match="632"):
        energy.cubic_closed_sums(t, sol)


def test_cubic_sum_signs(solution_1e4, table_1e4):
    s = energy.cubic_closed_sums(table_1e4, solution_1e4)
    assert s["K_sum"] > 0 and s["V_sum"] > 0 and s["C_sum"] < 0
    assert 0 <= s["C_relative_gap"] < 1
    narrow = energy.cubic_closed_sums(table_1e4, solution_1e4, extended=False)
    assert narrow["C_sum"] == pytest.approx(s["C_sum"], rel=1e-12)
