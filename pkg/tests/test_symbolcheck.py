import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carlemanlab.polycalc import Polynomial, p2, unit
from carlemanlab.symbolcheck import (
    DegenerateDenominator, HomogeneousForm, check_38_from_39, formal_shift, lhs_form_39, min_ratio_on_sphere,
    norm_form, rhs_form_39, sphere_samples, verify_factorization,
)


# ---------------------------------------------------------------------------
# symbolic facts
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_factorization(m, n):
    r = verify_factorization(m, n)
    assert r.passed, r.checks
    assert r.remainder <= 1e-10


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_factorization_quotient_numerically(m, n):
    # independent check by evaluation: d_n^m P2^m - m! (2 xi_n)^m == P2 * Ptilde at random points
    Pt = verify_factorization(m, n).Ptilde
    Pm = p2(n) ** m
    F = Pm.derivative(unit(n, n - 1, m))
    rng = np.random.default_rng(m * 10 + n)
    for _ in range(10):
        z = rng.normal(size=n) + 1j * rng.normal(size=n)
        lhs = F.evaluate(z) - math.factorial(m) * (2 * z[-1]) ** m
        rhs = np.sum(z * z) * Pt.evaluate(z)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_quotient_is_four_for_m2_n2():
    # d_2^2 (x^2 + y^2)^2 = 12 y^2 + 4 x^2 = 2 (2 y)^2 + 4 (x^2 + y^2)
    Pt = verify_factorization(2, 2).Ptilde
    assert Pt == Polynomial.constant(2, 4.0)


def test_m1_quotient_vanishes():
    for n in (1, 2, 3):
        assert verify_factorization(1, n).Ptilde.is_zero()


def test_shifted_gradient_coefficients():
    r = verify_factorization(1, 2)
    assert r.checks["shifted_gradient_coeffs"] == {"xi_n": [2.0, 0.0], "tau": [0.0, -2.0]}


def test_formal_shift_matches_direct_evaluation():
    P = p2(2) ** 2
    S = formal_shift(P)
    for xi1, xi2, tau in [(0.3, -1.2, 0.7), (1.0, 0.0, 2.0)]:
        direct = (xi1 ** 2 + (xi2 - 1j * tau) ** 2) ** 2
        assert abs(S.evaluate([xi1, xi2, tau]) - direct) < 1e-12


# ---------------------------------------------------------------------------
# forms
# ---------------------------------------------------------------------------

def lhs_m1_by_hand(tau, eta, xi):
    # m = 1: P2(xi - i tau e_n) = |xi|^2 - tau^2 - 2 i tau xi_n and both derivatives equal 2 (xi_n - i tau)
    g0 = np.sum(xi * xi, axis=1) - tau ** 2 - 2j * tau * xi[:, -1]
    g1 = 2 * (xi[:, -1] - 1j * tau)
    return np.abs(-1j * eta + g0) ** 2 + 2 * tau ** 2 * np.abs(g1) ** 2


@pytest.mark.parametrize("n", [1, 2])
def test_lhs_form_m1_matches_hand_expansion(n):
    rng = np.random.default_rng(n)
    z = rng.normal(size=(50, n + 2))
    got = lhs_form_39(1, n)(z)
    eta = np.abs(z[:, 1]) * z[:, 1]  # eta = |eta~|^(2m-1) eta~
    expected = lhs_m1_by_hand(z[:, 0], eta, z[:, 2:])
    assert np.allclose(got, expected, rtol=1e-12, atol=0)


@settings(max_examples=25)
@given(st.integers(1, 3), st.integers(1, 2), st.floats(0.1, 10), st.integers(0, 1000))
def test_forms_are_homogeneous(m, n, c, seed):
    z = np.random.default_rng(seed).normal(size=(20, n + 2))
    for form in (lhs_form_39(m, n), rhs_form_39(m, n), norm_form(m, n)):
        a = form(c * z)
        b = c ** form.degree * form(z)
        assert np.allclose(a, b, rtol=1e-9, atol=0)


def test_sphere_samples_are_unit_and_seeded():
    a = sphere_samples(4, 10_000, 3)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)
    assert np.array_equal(a, sphere_samples(4, 10_000, 3))
    assert not np.array_equal(a, sphere_samples(4, 10_000, 4))


def test_rhs_only_closed_form():
    # on the sphere e^2 + r^2 = 1 the minimum of e^4 + r^4 is 1/2, at e^2 = r^2 = 1/2
    r = min_ratio_on_sphere(rhs_form_39(1, 1), norm_form(1, 1))
    assert r.min_value == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("n", [1, 2])
def test_sphere_minimum_positive_and_refinement_stable(m, n):
    num, den = lhs_form_39(m, n), rhs_form_39(m, n)
    base = min_ratio_on_sphere(num, den, 10_000, seed=0)
    fine = min_ratio_on_sphere(num, den, 40_000, seed=0)
    assert base.min_value > 0
    assert abs(fine.min_value - base.min_value) <= 0.01 * base.min_value
    # the refined minimum never sits above the best raw sample
    assert base.min_value <= base.coarse_min


def test_sphere_minimum_of_m1_n1_is_two_thirds():
    r = min_ratio_on_sphere(lhs_form_39(1, 1), rhs_form_39(1, 1))
    assert r.min_value == pytest.approx(2 / 3, rel=1e-5)


def test_degenerate_denominator_rejected():
    zero = HomogeneousForm(lambda z: np.zeros(len(z)), 4, 1, 1, "zero")
    with pytest.raises(DegenerateDenominator):
        min_ratio_on_sphere(rhs_form_39(1, 1), zero)


def test_sample_floor():
    with pytest.raises(ValueError):
        min_ratio_on_sphere(rhs_form_39(1, 1), norm_form(1, 1), samples=100)


@pytest.mark.parametrize("m,n", [(1, 1), (2, 1), (1, 2)])
def test_check_38_zero_violations(m, n):
    r = check_38_from_39(m, n, trials=100_000)
    assert r.passed and r.violations == 0
    assert r.substitution_error <= 1e-9
    assert r.min_observed_ratio >= r.C * (1 - 1e-6)


def test_check_38_detects_an_overclaimed_constant():
    r = check_38_from_39(1, 1, trials=20_000, C=10.0)
    assert not r.passed and r.violations > 0
