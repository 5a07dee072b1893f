"""Numerical checks of the Treves identity and its two corollary inequalities.

``verify_treves`` evaluates both sides of

    int e^Q |P(D)u|^2 = sum_alpha b^alpha/alpha! int |conj(P)^(alpha)(D - i grad Q/2) v|^2,

with ``v = e^{Q/2} u`` and ``Q(x) = a.x + sum b_j x_j^2 / 2``.  The alpha-sum is
restricted to indices supported where ``b_j != 0`` and of order at most
``deg P``; every other term carries a zero factor.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal

from .gridops import (Grid, GridFunction, OverflowGuardError, WeightField, apply_conjugated, apply_symbol,
                      derivative_table, fourier_resample, mollifier, random_bumps, weighted_l2)
from .polycalc import (MultiIndex, Ode1Operator, Polynomial, binomial_power,
                       build_conjugated_power, mi_factorial, multi_indices)

DENOM_FLOOR = 1e-280
NOISE_REL = 1e-8
LEMMA23_OVERSAMPLE = 2


@dataclass(frozen=True)
class QuadraticWeight:
    """Q(x) = sum a_j x_j + sum b_j x_j**2 / 2."""

    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if len(self.a) != len(self.b):
            raise ValueError("a and b must have the same length")
        if not all(math.isfinite(v) for v in self.a + self.b):
            raise ValueError("quadratic weight coefficients must be finite")

    @property
    def dimension(self) -> int:
        return len(self.a)

    def field(self, grid: Grid) -> WeightField:
        return WeightField.quadratic(grid, self.a, self.b)

    def b_power(self, alpha: MultiIndex) -> float:
        return math.prod(bj ** aj for bj, aj in zip(self.b, alpha))

    def active_indices(self, max_order: int, min_order: int = 0) -> list[MultiIndex]:
        """alpha with alpha_j = 0 wherever b_j = 0 and min_order <= |alpha| <= max_order."""
        return [alpha for alpha in multi_indices(self.dimension, max_order, min_order)
                if all(bj != 0.0 or aj == 0 for bj, aj in zip(self.b, alpha))]


@dataclass
class IdentityReport:
    lhs: float
    rhs: float
    terms: dict[MultiIndex, float]
    coefficients: dict[MultiIndex, float]
    relative_error: float

    def to_json(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "relative_error": self.relative_error,
            "terms": [{"alpha": list(a), "integral": v, "coefficient": self.coefficients[a]}
                      for a, v in self.terms.items()],
        }


def verify_treves(P: Polynomial, Q: QuadraticWeight, u: GridFunction) -> IdentityReport:
    grid = u.grid
    if P.dimension != grid.dimension or Q.dimension != grid.dimension:
        raise ValueError("polynomial, weight and grid dimensions must agree")
    W = Q.field(grid)
    mask = u.support_mask
    half = W.values / 2 if mask is None else np.where(mask, W.values / 2, 0.0)
    if np.max(np.abs(half)) > 600.0:
        raise OverflowGuardError("e^Q overflows on the support; shrink a, b or the support")
    lhs = weighted_l2(apply_symbol(P, u), W)
    v = u.with_values(np.exp(half) * u.values)
    Pbar = P.conjugate()
    terms: dict[MultiIndex, float] = {}
    coeffs: dict[MultiIndex, float] = {}
    rhs = 0.0
    for alpha in Q.active_indices(max(P.degree, 0)):
        deriv = Pbar.derivative(alpha)
        if deriv.is_zero():
            continue
        c = Q.b_power(alpha) / mi_factorial(alpha)
        integral = weighted_l2(apply_conjugated(deriv, W, -1, v))
        terms[alpha] = integral
        coeffs[alpha] = c
        rhs += c * integral
    rel = abs(lhs - rhs) / max(lhs, rhs, 1e-300)
    return IdentityReport(lhs, rhs, terms, coeffs, rel)


# ---------------------------------------------------------------------------
# seeded random cases shared by the CLI and the test-suite
# ---------------------------------------------------------------------------

TREVES_EXTENT = 3.0
TREVES_BOX = 2.2


def treves_grid(dimension: int, points: int | None = None) -> Grid:
    """[-3, 3]^d with 512 points in 1-D and 256 per axis otherwise."""
    points = points or (512 if dimension == 1 else 256)
    return Grid((TREVES_EXTENT,) * dimension, (points,) * dimension)


def random_polynomial(dimension: int, degree: int, rng: np.random.Generator) -> Polynomial:
    """Full polynomial of the given degree with standard complex normal coefficients."""
    return Polynomial(dimension, {a: complex(*rng.normal(size=2)) for a in multi_indices(dimension, degree)})


def test_family(grid: Grid, count: int, seed: int, bump_count: int = 3) -> list[GridFunction]:
    """Well-resolved bumps in [-2.2, 2.2]^d, radii at least half the box half-width."""
    box = [(-TREVES_BOX, TREVES_BOX)] * grid.dimension
    return random_bumps(grid, box, count, bump_count=bump_count, seed=seed, min_radius=0.5)


test_family.__test__ = False  # not a pytest function


def random_treves_case(dimension: int, degree: int, seed: int, *, zero_weight: bool = False,
                       points: int | None = None) -> tuple[Polynomial, QuadraticWeight, GridFunction]:
    """(P, Q, u) with complex P of the given degree and a, b uniform in [-1, 1]."""
    rng = np.random.default_rng(seed)
    P = random_polynomial(dimension, degree, rng)
    if zero_weight:
        Q = QuadraticWeight((0.0,) * dimension, (0.0,) * dimension)
    else:
        Q = QuadraticWeight(rng.uniform(-1, 1, dimension), rng.uniform(-1, 1, dimension))
    u = test_family(treves_grid(dimension, points), 1, seed)[0]
    return P, Q, u


def random_lemma22_case(dimension: int, degree: int, seed: int, count: int = 8,
                        points: int | None = None) -> tuple[Polynomial, QuadraticWeight, list[GridFunction]]:
    """Like random_treves_case but with b >= 0 and a family of ``count`` functions."""
    rng = np.random.default_rng(seed)
    P = random_polynomial(dimension, degree, rng)
    Q = QuadraticWeight(rng.uniform(-1, 1, dimension), rng.uniform(0, 1, dimension))
    return P, Q, test_family(treves_grid(dimension, points), count, seed)


@dataclass
class Lemma22Report:
    C_est: float | None
    passed: bool
    vacuous: bool
    ratios: list[float | None]
    seed: int | None = None
    k: int = 0

    def to_json(self) -> dict:
        return asdict(self)


def lemma22_sides(P: Polynomial, Q: QuadraticWeight, k: int, v: GridFunction) -> tuple[float, float]:
    """(L, R) of the weighted-derivative comparison for one function v."""
    W = Q.field(v.grid)
    Pbar = P.conjugate()
    left = right = 0.0
    for alpha in Q.active_indices(max(P.degree, 0), k):
        bp = Q.b_power(alpha)
        left += bp * weighted_l2(apply_conjugated(Pbar.derivative(alpha), W, -1, v))
        right += bp * weighted_l2(apply_conjugated(P.derivative(alpha), W, +1, v))
    return left, right


def estimate_lemma22(P: Polynomial, Q: QuadraticWeight, k: int, family: Sequence[GridFunction],
                     seed: int | None = None) -> Lemma22Report:
    """C_est = min over the family of L(v)/R(v); pass iff C_est > 0."""
    if any(bj < 0 for bj in Q.b):
        raise ValueError("the comparison needs b_j >= 0 for every j")
    if not family:
        raise ValueError("family must be nonempty")
    if k > max(P.degree, 0) or not Q.active_indices(max(P.degree, 0), k):
        return Lemma22Report(None, True, True, [None] * len(family), seed, k)
    ratios: list[float | None] = []
    for v in family:
        left, right = lemma22_sides(P, Q, k, v)
        ratios.append(left / right if right >= DENOM_FLOOR else None)
    valid = [r for r in ratios if r is not None]
    if not valid:
        return Lemma22Report(None, True, True, ratios, seed, k)
    c = min(valid)
    return Lemma22Report(c, bool(c > 0 and math.isfinite(c)), False, ratios, seed, k)


# ---------------------------------------------------------------------------
# pointwise error estimates for (D_s +- i tau (1+s))^K
# ---------------------------------------------------------------------------

@dataclass
class Lemma23Report:
    K: int
    tau: float
    delta: float
    sign: int
    C_est_23: float
    C_est_24: float
    C_est_23_refined: float
    C_est_24_refined: float
    pass_23: bool
    pass_24: bool
    grid: dict = field(default_factory=dict)

    @property
    def C_est(self) -> float:
        return self.C_est_23

    def to_json(self) -> dict:
        return asdict(self)


def default_lemma23_grid(delta: float, N: int = 2048) -> Grid:
    return Grid((2.0 * delta,), (N,))


def default_lemma23_function(delta: float, grid: Grid | None = None) -> GridFunction:
    grid = grid or default_lemma23_grid(delta)
    s = grid.axis(0)
    return GridFunction(grid, mollifier(s / delta), [(-delta, delta)])


def lemma23_family(delta: float, count: int = 8, seed: int = 0,
                   bump_count: int = 2) -> list[Callable[[Grid], GridFunction]]:
    """Factories grid -> bump superposition on [-delta, delta]; the same bumps on every grid."""
    def member(i):
        return lambda g: random_bumps(g, [(-delta, delta)], count, bump_count=bump_count, seed=seed)[i]

    return [member(i) for i in range(count)]


def lemma23_ratios(K: int, tau: float, delta: float, sign: int, u: GridFunction,
                   oversample: int = LEMMA23_OVERSAMPLE) -> tuple[float, float]:
    """Max over |s| < delta of the pointwise ratios for both error bounds.

    The ratios have cusps where some |D^k u| vanishes, so the maximum is
    taken after band-limited interpolation of every D^k u onto a grid
    ``oversample`` times finer than that of u.
    """
    derivs = derivative_table(u, [(k,) for k in range(K + 1)])
    derivs = {b[0]: v for b, v in derivs.items()}
    s = u.grid.axis(0)
    if oversample > 1:
        size = oversample * s.size
        derivs = {k: signal.resample(v, size) for k, v in derivs.items()}
        s = u.grid.refined(oversample).axis(0)
    A = build_conjugated_power(sign, tau, K)
    err23 = np.abs((A - Ode1Operator({K: 1.0})).apply(s, derivs))
    err24 = np.abs((A - binomial_power(sign, tau, K)).apply(s, derivs))
    absd = [np.abs(derivs[k]) for k in range(K)]
    zero = np.zeros(s.shape)
    rhs23 = sum((tau ** (K - k) * absd[k] for k in range(K)), zero)
    rhs24 = (1 + delta * tau) * sum((tau ** (K - 1 - k) * absd[k] for k in range(K)), zero)
    region = np.abs(s) < delta
    return _max_ratio(err23, rhs23, region), _max_ratio(err24, rhs24, region)


def _max_ratio(num: np.ndarray, den: np.ndarray, region: np.ndarray) -> float:
    # points where the bound sits in the round-off of the spectral derivatives carry no information
    floor = NOISE_REL * float(np.max(den[region])) if np.any(region) else 0.0
    ok = region & (den > max(DENOM_FLOOR, floor))
    if not np.any(ok):
        # K = 0: both sides vanish identically
        return 0.0 if np.all(num[region] <= DENOM_FLOOR) else float("nan")
    return float(np.max(num[ok] / den[ok]))


def verify_lemma23(K: int, tau: float, delta: float, sign: int,
                   u: GridFunction | Callable[[Grid], GridFunction] | None = None,
                   *, refine: int = 2, stability: float = 0.10) -> Lemma23Report:
    """Pointwise constants of both error bounds, re-estimated on a refined grid.

    ``u`` may be a GridFunction (refined by band-limited interpolation) or a
    factory ``grid -> GridFunction`` (resampled).  A bound passes when its
    constant is finite and moves by at most ``stability`` under refinement.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if tau <= 0:
        raise ValueError("tau must be positive")
    if u is None:
        factory = lambda g: default_lemma23_function(delta, g)  # noqa: E731
        base = factory(default_lemma23_grid(delta))
    elif callable(u) and not isinstance(u, GridFunction):
        factory = u
        base = factory(default_lemma23_grid(delta))
    else:
        base = u
        factory = lambda g: fourier_resample(base, g)  # noqa: E731
    fine = factory(base.grid.refined(refine))
    c23, c24 = lemma23_ratios(K, tau, delta, sign, base)
    f23, f24 = lemma23_ratios(K, tau, delta, sign, fine)

    def stable(a, b):
        return bool(math.isfinite(a) and math.isfinite(b) and abs(b - a) <= stability * abs(a))

    return Lemma23Report(K, tau, delta, sign, c23, c24, f23, f24,
                         stable(c23, f23), stable(c24, f24), base.grid.to_json())


__all__ = [
    "QuadraticWeight", "IdentityReport", "Lemma22Report", "Lemma23Report",
    "verify_treves", "estimate_lemma22", "lemma22_sides", "verify_lemma23", "lemma23_ratios",
    "default_lemma23_function", "default_lemma23_grid", "treves_grid", "random_polynomial", "test_family",
    "random_treves_case", "random_lemma22_case", "lemma23_family",
]
