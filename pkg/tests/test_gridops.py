import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carlemanlab.gridops import (
    Grid, GridFunction, OverflowGuardError, PaddingError, WeightField, apply_conjugated, apply_symbol,
    fourier_resample, load_binary, mollifier, parseval_l2, random_bumps, save_binary, save_csv,
    spectral_derivative, weighted_l2,
)
from carlemanlab.polycalc import OperatorSymbol, Polynomial

from oracles import fd4_D, gaussian, gaussian_d1, gaussian_d2

L = 4.0
SIGMA = L / 8


@pytest.fixture(scope="module")
def g1():
    return Grid((L,), (256,))


@pytest.fixture(scope="module")
def gauss(g1):
    return GridFunction(g1, gaussian(g1.axis(0), SIGMA))


def bump2d(points=256):
    # support box equals the true support; a looser box lets e^{W/2} amplify
    # FFT round-off in the empty margin
    g = Grid((2.0, 2.0), (points, points))
    t, x = g.mesh()
    u = mollifier(np.sqrt(t ** 2 + x ** 2) / 1.2) * np.exp(1j * (2 * t - x))
    return g, GridFunction(g, u, [(-1.2, 1.2), (-1.2, 1.2)])


def relmax(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", [16, 96, 256, 512, 2048])
def test_grid_accepts_fft_friendly_counts(n):
    assert Grid((1.0,), (n,)).counts == (n,)


@pytest.mark.parametrize("n", [8, 14, 100 + 1, 98, 100 * 7])
def test_grid_rejects_bad_counts(n):
    with pytest.raises(ValueError):
        Grid((1.0,), (n,))


def test_grid_spacing_and_axis():
    g = Grid((2.0, 1.0), (16, 32))
    assert g.spacing == (0.25, 1 / 16)
    assert g.axis(0)[0] == -2.0 and g.axis(0).size == 16
    assert g.frequencies(0)[8] == 0.0  # Nyquist mode dropped


def test_padding_violation_rejected(g1):
    x = g1.axis(0)
    with pytest.raises(PaddingError):
        GridFunction(g1, mollifier(x / 3.5), [(-3.5, 3.5)])


def test_support_claim_checked(g1):
    x = g1.axis(0)
    with pytest.raises(ValueError):
        GridFunction(g1, mollifier(x / 2.5), [(-2.0, 2.0)])


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def test_first_derivative_of_gaussian(g1, gauss):
    x = g1.axis(0)
    got = spectral_derivative(gauss, (1,)).values
    expected = -1j * gaussian_d1(x, SIGMA)
    assert relmax(got, expected) <= 1e-8


def test_zero_order_is_identity(gauss):
    assert np.array_equal(spectral_derivative(gauss, (0,)).values, gauss.values)
    assert np.allclose(apply_symbol(Polynomial.constant(1, 1.0), gauss).values, gauss.values, atol=1e-15)


def test_derivative_of_even_bump_is_odd(g1, gauss):
    d = spectral_derivative(gauss, (1,)).values
    # x -> -x on the grid maps index i to N - i
    flipped = np.roll(d[::-1], 1)
    assert np.max(np.abs(d + flipped)) <= 1e-10 * np.max(np.abs(d))


def test_second_order_symbol_on_gaussian(g1, gauss):
    x = g1.axis(0)
    got = apply_symbol(Polynomial.monomial((2,)), gauss).values
    assert relmax(got, -gaussian_d2(x, SIGMA)) <= 1e-8


def test_parabolic_symbol_is_sum_of_derivatives():
    g, u = bump2d()
    P = OperatorSymbol.parabolic(1, 1).symbol
    direct = apply_symbol(P, u).values
    assembled = 1j * spectral_derivative(u, (1, 0)).values + spectral_derivative(u, (0, 2)).values
    assert relmax(direct, assembled) <= 1e-10


@given(st.tuples(st.integers(0, 2), st.integers(0, 2)), st.tuples(st.integers(0, 2), st.integers(0, 2)))
def test_derivatives_commute_and_compose(beta, gamma):
    # fully resolved Gaussian bump, no support mask between the two steps
    g = Grid((2.0, 2.0), (128, 128))
    t, x = g.mesh()
    u = GridFunction(g, gaussian(t - 0.1, 0.25) * gaussian(x + 0.2, 0.3) * np.exp(1j * (2 * t - x)))
    lhs = spectral_derivative(spectral_derivative(u, beta), gamma).values
    rhs = spectral_derivative(u, (beta[0] + gamma[0], beta[1] + gamma[1])).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(np.max(np.abs(rhs)), 1.0)


@pytest.mark.parametrize("beta", [(1, 0), (0, 1), (1, 1), (0, 2)])
def test_spectral_agrees_with_fourth_order_differences(beta):
    g = Grid((1.0, 1.0), (512, 512))
    u = random_bumps(g, [(-0.7, 0.7)] * 2, 2, seed=3)
    for f in u:
        spec = spectral_derivative(f, beta).values
        ref = fd4_D(f.values, g.spacing, beta)
        assert relmax(ref, spec) <= 1e-4


def test_derivative_order_limit(gauss):
    with pytest.raises(ValueError):
        spectral_derivative(gauss, (15,))


# ---------------------------------------------------------------------------
# conjugation
# ---------------------------------------------------------------------------

def test_conjugated_zero_weight(g1, gauss):
    P = Polynomial(1, {(2,): 1.0, (1,): 2j, (0,): -1})
    got = apply_conjugated(P, WeightField.zero(g1), 1, gauss).values
    assert np.allclose(got, apply_symbol(P, gauss).values, rtol=0, atol=1e-14)


def test_conjugated_first_order_by_hand(g1):
    x = g1.axis(0)
    v = GridFunction(g1, mollifier(x / 2.5) * np.exp(0.7j * x), [(-2.5, 2.5)])
    W = WeightField.quadratic(g1, [0.0], [2.0])  # Q = x^2, grad Q / 2 = x
    got = apply_conjugated(Polynomial.variable(1, 0), W, -1, v).values
    expected = spectral_derivative(v, (1,)).values - 1j * x * v.values
    assert relmax(got, expected) <= 1e-9


def test_conjugation_inverse_with_unit_symbol(g1, gauss):
    W = WeightField.quadratic(g1, [0.5], [-1.0])
    one = Polynomial.constant(1, 1.0)
    there = apply_conjugated(one, W, 1, gauss)
    back = apply_conjugated(one, W, -1, there)
    assert relmax(back.values, gauss.values) <= 1e-13


@pytest.mark.parametrize("tau", [0.5, 2.0])
@pytest.mark.parametrize("sign", [1, -1])
def test_conjugated_with_carleman_weight(tau, sign):
    # W = 2 tau phi, phi = x_n + x_n^2/2, so grad W / 2 = tau (1 + x_n)
    g, v = bump2d()
    t, x = g.mesh()
    W = WeightField(g, 2 * tau * np.broadcast_to(x + x * x / 2, g.shape))
    P = Polynomial.variable(2, 1)
    got = apply_conjugated(P, W, sign, v).values
    expected = spectral_derivative(v, (0, 1)).values + sign * 1j * tau * (1 + x) * v.values
    assert relmax(got, expected) <= 1e-9


def test_overflow_guard(g1, gauss):
    W = WeightField.quadratic(g1, [0.0], [200.0])
    with pytest.raises(OverflowGuardError):
        apply_conjugated(Polynomial.variable(1, 0), W, 1, gauss)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("sigma", [0.3, SIGMA, 0.7])
def test_gaussian_quadrature_closed_form(g1, sigma):
    f = GridFunction(g1, gaussian(g1.axis(0), sigma))
    assert weighted_l2(f) == pytest.approx(sigma * np.sqrt(np.pi), rel=1e-10)


def test_weighted_gaussian_closed_form(g1):
    # int e^{a x} e^{-x^2/s^2} dx = s sqrt(pi) e^{a^2 s^2 / 4}
    s, a = 0.5, 1.3
    f = GridFunction(g1, gaussian(g1.axis(0), s))
    W = WeightField.quadratic(g1, [a], [0.0])
    assert weighted_l2(f, W) == pytest.approx(s * np.sqrt(np.pi) * np.exp(a * a * s * s / 4), rel=1e-10)


def test_zero_function_has_zero_norm(g1):
    assert weighted_l2(GridFunction(g1, np.zeros(256))) == 0.0


@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_quadrature_homogeneity(c):
    g, u = bump2d(64)
    W = WeightField.quadratic(g, [0.3, -0.2], [1.0, 0.5])
    assert weighted_l2(c * u, W) == pytest.approx(abs(c) ** 2 * weighted_l2(u, W), rel=1e-12, abs=1e-300)


def test_parseval():
    g, u = bump2d()
    assert parseval_l2(u) == pytest.approx(weighted_l2(u), rel=1e-12)


def test_nonfinite_rejected(g1):
    vals = np.zeros(256, dtype=complex)
    vals[3] = np.nan
    with pytest.raises(ValueError):
        weighted_l2(GridFunction(g1, vals))


# ---------------------------------------------------------------------------
# resampling, export, families
# ---------------------------------------------------------------------------

def test_fourier_resample_keeps_samples(g1, gauss):
    fine = fourier_resample(gauss, g1.refined(2))
    assert np.allclose(fine.values[::2], gauss.values, atol=1e-13)


def test_binary_round_trip(tmp_path):
    g, u = bump2d(32)
    path = tmp_path / "u.bin"
    save_binary(u, path)
    back = load_binary(path)
    assert back.grid.counts == g.counts and back.grid.extents == g.extents
    assert np.array_equal(back.values, u.values)
    raw = path.read_bytes()
    assert raw[:4] == b"CLGF"
    # payload is interleaved little-endian re/im
    payload = np.frombuffer(raw[-u.values.size * 16:], dtype="<f8")
    assert payload[0] == u.values.flat[0].real and payload[1] == u.values.flat[0].imag


def test_csv_round_trip(tmp_path):
    g, u = bump2d(32)
    path = tmp_path / "u.csv"
    save_csv(u, path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    assert data.size == 32 * 32
    assert np.array_equal(data["re"] + 1j * data["im"], u.values.ravel())


def test_random_bumps_deterministic_and_supported():
    g = Grid((1.0, 1.0), (64, 64))
    a = random_bumps(g, [(-0.6, 0.6)] * 2, 3, seed=7, modulation=0.1)
    b = random_bumps(g, [(-0.6, 0.6)] * 2, 3, seed=7, modulation=0.1)
    c = random_bumps(g, [(-0.6, 0.6)] * 2, 3, seed=8, modulation=0.1)
    for f, h in zip(a, b):
        assert np.array_equal(f.values, h.values)
    assert not np.array_equal(a[0].values, c[0].values)
    for f in a:  # re-validate the support claim
        GridFunction(g, f.values, f.support_box)


def test_random_bumps_wavenumber_bound():
    g = Grid((1.0,), (64,))
    with pytest.raises(ValueError):
        random_bumps(g, [(-0.5, 0.5)], 1, max_wavenumber=1e3)


def test_mollifier_shape():
    r = np.array([0.0, 0.5, 0.9, 1.0, 2.0])
    m = mollifier(r)
    assert m[0] == 1.0 and m[3] == 0.0 and m[4] == 0.0
    assert 0 < m[2] < m[1] < 1
