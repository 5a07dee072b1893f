import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carlemanlab.gridops import Grid, GridFunction, OverflowGuardError, apply_symbol, mollifier, weighted_l2
from carlemanlab.polycalc import Polynomial
from carlemanlab.treves import (
    QuadraticWeight, estimate_lemma22, lemma22_sides, lemma23_family, random_lemma22_case,
    random_treves_case, treves_grid, verify_lemma23, verify_treves,
)


# ---------------------------------------------------------------------------
# Treves identity
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("deg", [0, 1, 2, 3, 4])
def test_identity_random_cases(d, deg):
    for seed in range(3):
        r = verify_treves(*random_treves_case(d, deg, seed))
        assert r.relative_error <= 1e-7


@pytest.mark.parametrize("d", [1, 2])
def test_zero_weight_reduces_to_plancherel(d):
    for seed in range(3):
        P, Q, u = random_treves_case(d, 3, seed, zero_weight=True)
        r = verify_treves(P, Q, u)
        assert r.relative_error <= 1e-10
        # only alpha = 0 survives, with coefficient 1
        assert list(r.terms) == [(0,) * d]


def test_first_order_case_by_hand():
    # P = xi, Q = b x^2/2: ||e^{Q/2} D u||^2 = ||(D - i b x/2 ...)v||^2 + b ||v||^2
    g = treves_grid(1)
    x = g.axis(0)
    u = GridFunction(g, mollifier(x / 2) * np.exp(0.5j * x), [(-2.0, 2.0)])
    b = 0.8
    r = verify_treves(Polynomial.variable(1, 0), QuadraticWeight((0.0,), (b,)), u)
    v2 = weighted_l2(u, QuadraticWeight((0.0,), (b,)).field(g))
    assert r.coefficients[(1,)] == pytest.approx(b)
    assert r.terms[(1,)] == pytest.approx(v2, rel=1e-10)
    assert r.relative_error <= 1e-10


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_terms_nonnegative_and_alpha0_bounded(seed, deg):
    rng = np.random.default_rng(seed)
    P, _, u = random_treves_case(1, deg, seed)
    Q = QuadraticWeight(rng.uniform(-1, 1, 1), rng.uniform(0, 1, 1))
    r = verify_treves(P, Q, u)
    assert all(v >= 0 for v in r.terms.values())
    assert r.terms[(0,)] <= r.rhs * (1 + 1e-12)


def test_identity_lhs_is_weighted_norm():
    P, Q, u = random_treves_case(1, 2, 5)
    r = verify_treves(P, Q, u)
    assert r.lhs == pytest.approx(weighted_l2(apply_symbol(P, u), Q.field(u.grid)), rel=1e-14)


def test_dimension_mismatch():
    P, Q, u = random_treves_case(1, 2, 0)
    with pytest.raises(ValueError):
        verify_treves(Polynomial.variable(2, 0), Q, u)


def test_overflow_guard():
    P, _, u = random_treves_case(1, 2, 0)
    with pytest.raises(OverflowGuardError):
        verify_treves(P, QuadraticWeight((0.0,), (500.0,)), u)


# ---------------------------------------------------------------------------
# Lemma 2.2
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("deg", [1, 2, 3])
def test_lemma22_constant_positive(d, deg):
    P, Q, family = random_lemma22_case(d, deg, seed=deg, count=4)
    for k in range(deg + 1):
        r = estimate_lemma22(P, Q, k, family)
        assert r.passed
        assert r.vacuous or r.C_est > 0


def test_lemma22_monotone_in_family():
    P, Q, family = random_lemma22_case(1, 3, seed=1, count=8)
    big = estimate_lemma22(P, Q, 1, family).C_est
    small = estimate_lemma22(P, Q, 1, family[:3]).C_est
    assert big <= small


def test_lemma22_vacuous_when_k_exceeds_degree():
    P, Q, family = random_lemma22_case(1, 2, seed=0, count=2)
    r = estimate_lemma22(P, Q, 3, family)
    assert r.vacuous and r.passed and r.C_est is None


def test_lemma22_rejects_negative_b():
    P, _, family = random_lemma22_case(1, 2, seed=0, count=1)
    with pytest.raises(ValueError):
        estimate_lemma22(P, QuadraticWeight((0.0,), (-0.5,)), 0, family)


# ---------------------------------------------------------------------------
# Lemma 2.3
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def family23():
    return lemma23_family(0.5, count=4, seed=0)


@pytest.mark.parametrize("K", [0, 1, 2, 3, 4])
@pytest.mark.parametrize("tau", [2.0, 10.0, 50.0])
def test_lemma23_stable_under_refinement(family23, K, tau):
    for f in family23:
        for sign in (1, -1):
            r = verify_lemma23(K, tau, 0.5, sign, f)
            assert r.pass_23 and r.pass_24
            assert np.isfinite(r.C_est_23) and np.isfinite(r.C_est_24)


def test_lemma23_zero_order_is_exact(family23):
    r = verify_lemma23(0, 10.0, 0.5, 1, family23[0])
    assert r.C_est_23 == 0.0 and r.C_est_24 == 0.0


def test_lemma23_default_function():
    r = verify_lemma23(2, 10.0, 0.5, -1)
    assert r.pass_23 and r.pass_24


@pytest.mark.parametrize("K", [1, 2, 3, 4])
def test_lemma23_tau_doubling(family23, K):
    f = family23[1]
    for sign in (1, -1):
        low, high = [], []
        for tau in (2.0, 4.0, 8.0, 16.0, 32.0, 64.0):
            r, r2 = verify_lemma23(K, tau, 0.5, sign, f), verify_lemma23(K, 2 * tau, 0.5, sign, f)
            assert r2.pass_23 and r2.pass_24
            (low if tau <= 8 else high).append(max(r2.C_est_23, r2.C_est_24))
        # the bound is uniform in tau: no growth as tau increases
        assert max(high) <= 2 * max(low)


def test_lemma23_preconditions():
    with pytest.raises(ValueError):
        verify_lemma23(-1, 1.0, 0.5, 1)
    with pytest.raises(ValueError):
        verify_lemma23(1, 1.0, 1.5, 1)
    with pytest.raises(ValueError):
        verify_lemma23(1, 0.0, 0.5, 1)


def test_lemma23_accepts_plain_grid_function():
    g = Grid((1.0,), (2048,))
    s = g.axis(0)
    u = GridFunction(g, mollifier(s / 0.5) * np.exp(3j * s), [(-0.5, 0.5)])
    r = verify_lemma23(3, 10.0, 0.5, 1, u)
    assert r.pass_23 and r.pass_24
