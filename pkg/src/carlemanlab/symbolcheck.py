"""Symbol-level algebra behind the parabolic Carleman estimate.

Three things are checked here:

* exact polynomial identities for powers of ``P_2(xi) = |xi|^2`` shifted by
  ``-i tau e_n``, with ``tau`` carried as an extra formal variable;
* positivity of the ratio of two degree-``4m`` homogeneous forms in
  ``z = (tau, eta~, xi)`` on the unit sphere, by quasi-random sampling followed
  by golden-section refinement along great circles;
* a Monte Carlo transfer of the sphere constant back to the un-substituted
  variables ``(tau, eta, xi)`` with ``eta = |eta~|^(2m-1) eta~``.
"""
from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from . import _accel
from .polycalc import Polynomial, p2, unit

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# formal shift xi -> xi - i tau e_n
# ---------------------------------------------------------------------------

def formal_shift(P: Polynomial) -> Polynomial:
    """P(xi - i tau e_n) as a polynomial in (xi_1..xi_n, tau)."""
    n = P.dimension
    d = n + 1
    images = [Polynomial.variable(d, j) for j in range(n)]
    images[n - 1] = Polynomial.variable(d, n - 1) - 1j * Polynomial.variable(d, n)
    return P.substitute(images)


def lift(P: Polynomial) -> Polynomial:
    """Embed a polynomial in xi into (xi, tau) without changing it."""
    n = P.dimension
    return P.embed(n + 1, list(range(n)))


@dataclass
class FactorizationReport:
    m: int
    n: int
    passed: bool
    Ptilde: Polynomial
    remainder: float
    checks: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"m": self.m, "n": self.n, "pass": self.passed, "Ptilde": self.Ptilde.to_json(),
                "remainder": self.remainder, "checks": self.checks}


def verify_factorization(m: int, n: int, tol: float = 1e-10) -> FactorizationReport:
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    en = unit(n, n - 1)
    P2 = p2(n)
    Pm = P2 ** m
    dP2 = P2.derivative(en)
    # (i) chain rule, after the formal shift
    lhs1 = formal_shift(Pm.derivative(en))
    rhs1 = m * formal_shift(P2 ** (m - 1)) * formal_shift(dP2)
    ok1 = lhs1.isclose(rhs1, atol=tol)
    # (ii) d_n^m P2^m - m! (d_n P2)^m is a multiple of P2
    F = Pm.derivative(unit(n, n - 1, m)) - math.factorial(m) * dP2 ** m
    Ptilde, rem = F.divmod(P2)
    scale = max(F.max_abs_coefficient(), 1.0)
    rem_size = rem.max_abs_coefficient() / scale
    Fs = formal_shift(F)
    q_s, rem_s = Fs.divmod(formal_shift(P2))
    rem_s_size = rem_s.max_abs_coefficient() / max(Fs.max_abs_coefficient(), 1.0)
    ok2 = (rem_size <= tol and rem_s_size <= tol
           and q_s.isclose(formal_shift(Ptilde), atol=tol)
           and (F - P2 * Ptilde).max_abs_coefficient() <= tol * scale)
    # (iii) (d_n P2)(xi - i tau e_n) = 2 xi_n - 2 i tau
    shifted = formal_shift(dP2)
    expected = Polynomial(n + 1, {unit(n + 1, n - 1): 2.0, unit(n + 1, n): -2j})
    ok3 = shifted.isclose(expected, atol=tol)
    checks = {
        "chain_rule": bool(ok1),
        "divisible": bool(ok2),
        "shifted_gradient": bool(ok3),
        "remainder_unshifted": rem_size,
        "remainder_shifted": rem_s_size,
        "shifted_gradient_coeffs": {"xi_n": _cjson(shifted.coefficient(unit(n + 1, n - 1))),
                                    "tau": _cjson(shifted.coefficient(unit(n + 1, n)))},
    }
    return FactorizationReport(m, n, bool(ok1 and ok2 and ok3), Ptilde, max(rem_size, rem_s_size), checks)


def _cjson(c: complex) -> list[float]:
    return [c.real, c.imag]


# ---------------------------------------------------------------------------
# homogeneous forms on R^{2+n}, coordinates z = (tau, eta~, xi_1..xi_n)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HomogeneousForm:
    evaluate: Callable[[np.ndarray], np.ndarray]
    degree: int
    m: int
    n: int
    name: str = ""

    @property
    def dimension(self) -> int:
        return self.n + 2

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        out = self.evaluate(np.atleast_2d(z))
        return out[0] if single else out

    def scaled(self, c: float) -> HomogeneousForm:
        return HomogeneousForm(lambda z: c * self.evaluate(z), self.degree, self.m, self.n,
                               f"{c:g}*{self.name}")


class _ShiftedSymbols:
    """P2^m, d_n P2^m and d_n^m P2^m at xi - i tau e_n, as polynomials in (xi, tau)."""

    def __init__(self, m: int, n: int):
        en = unit(n, n - 1)
        Pm = p2(n) ** m
        self.m, self.n = m, n
        self.g0 = formal_shift(Pm)
        self.g1 = formal_shift(Pm.derivative(en))
        self.g2 = formal_shift(Pm.derivative(unit(n, n - 1, m)))

    def values(self, tau: np.ndarray, xi: np.ndarray):
        pts = np.column_stack([xi, tau]).astype(np.complex128)
        return self.g0.evaluate_many(pts), self.g1.evaluate_many(pts), self.g2.evaluate_many(pts)

    def lhs(self, tau: np.ndarray, eta: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """|-i eta + G0|^2 + tau^2 |G1|^2 + tau^(2m) |G2|^2 for real eta."""
        g0, g1, g2 = self.values(tau, xi)
        first = np.abs(-1j * eta + g0) ** 2
        return first + tau ** 2 * np.abs(g1) ** 2 + tau ** (2 * self.m) * np.abs(g2) ** 2


_SYMBOL_CACHE: dict[tuple[int, int], _ShiftedSymbols] = {}


def _symbols(m: int, n: int) -> _ShiftedSymbols:
    if (m, n) not in _SYMBOL_CACHE:
        _SYMBOL_CACHE[(m, n)] = _ShiftedSymbols(m, n)
    return _SYMBOL_CACHE[(m, n)]


def lhs_form_39(m: int, n: int) -> HomogeneousForm:
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    sym = _symbols(m, n)

    def evaluate(z: np.ndarray) -> np.ndarray:
        tau, eta_t, xi = z[:, 0], z[:, 1], z[:, 2:]
        return sym.lhs(tau, _accel.eta_power(eta_t, m), xi)

    return HomogeneousForm(evaluate, 4 * m, m, n, "lhs")


def rhs_form_39(m: int, n: int) -> HomogeneousForm:
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")

    def evaluate(z: np.ndarray) -> np.ndarray:
        tau, eta_t, xi = z[:, 0], z[:, 1], z[:, 2:]
        r2 = np.sum(xi * xi, axis=1) + tau * tau
        return np.abs(eta_t) ** (4 * m) + r2 ** (2 * m)

    return HomogeneousForm(evaluate, 4 * m, m, n, "rhs")


def norm_form(m: int, n: int) -> HomogeneousForm:
    """|z|^(4m); identically 1 on the unit sphere."""
    def evaluate(z: np.ndarray) -> np.ndarray:
        return np.sum(z * z, axis=1) ** (2 * m)

    return HomogeneousForm(evaluate, 4 * m, m, n, "norm")


# ---------------------------------------------------------------------------
# minimisation of num/den on the unit sphere
# ---------------------------------------------------------------------------

@dataclass
class SphereMinReport:
    min_value: float
    argmin: np.ndarray
    samples_used: int
    refinement_iterations: int
    seed: int
    coarse_min: float
    m: int | None = None
    n: int | None = None

    def to_json(self) -> dict:
        return {"m": self.m, "n": self.n, "min_value": self.min_value,
                "argmin": [float(v) for v in self.argmin], "samples": self.samples_used,
                "refinement_iterations": self.refinement_iterations, "seed": self.seed,
                "coarse_min": self.coarse_min}


class DegenerateDenominator(ValueError):
    pass


def sphere_samples(dim: int, samples: int, seed: int) -> np.ndarray:
    """Scrambled Sobol points pushed through the normal quantile and normalised."""
    sob = qmc.Sobol(dim, scramble=True, seed=seed)
    u = sob.random_base2(int(math.ceil(math.log2(samples))))
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _tangent_basis(x: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) of the tangent space of the sphere at unit x."""
    q, _ = np.linalg.qr(np.column_stack([x, np.eye(x.size)]))
    return q[:, 1:x.size].T


# gains below this relative size do not hold the step open; the minima of
# some forms sit in valleys flat to ~1e-11
PROGRESS_REL = 1e-10


def min_ratio_on_sphere(num: HomogeneousForm, den: HomogeneousForm, samples: int = 10_000,
                        seed: int = 0, starts: int = 8, step0: float = 0.05,
                        tol: float = 1e-6, max_iterations: int = 500) -> SphereMinReport:
    if num.dimension != den.dimension:
        raise ValueError("forms live in different dimensions")
    if samples < 10_000:
        raise ValueError("samples must be at least 1e4")
    dim = num.dimension
    pts = sphere_samples(dim, samples, seed)
    dvals = den.evaluate(pts)
    bad = np.flatnonzero(~(dvals > 0))
    if bad.size:
        raise DegenerateDenominator(f"denominator vanishes at sample {pts[bad[0]].tolist()}")
    ratio = num.evaluate(pts) / dvals
    coarse_min = float(np.min(ratio))

    def f(z: np.ndarray) -> np.ndarray:
        return num.evaluate(z) / den.evaluate(z)

    order = np.argsort(ratio, kind="stable")[:starts]
    x = pts[order].copy()
    fx = ratio[order].copy()
    step = step0
    iterations = 0
    while step >= tol and iterations < max_iterations:
        iterations += 1
        improved = np.zeros(len(x), dtype=bool)
        for i in range(dim - 1):
            dirs = np.array([_tangent_basis(xk)[i] for xk in x])
            theta, ftheta = _golden_vectorised(f, x, dirs, step)
            better = ftheta < fx
            significant = ftheta < fx - PROGRESS_REL * np.abs(fx)
            if np.any(better):
                xn = np.cos(theta)[:, None] * x + np.sin(theta)[:, None] * dirs
                xn /= np.linalg.norm(xn, axis=1, keepdims=True)
                x[better] = xn[better]
                fx[better] = ftheta[better]
                improved |= significant & (np.abs(theta) > 0.5 * step)
        # the incumbent sets the pace; lagging starts crawling along
        # shallow valleys would otherwise hold the step open
        if not improved[np.argmin(fx)]:
            step *= 0.5
    best = int(np.argmin(fx))
    return SphereMinReport(float(fx[best]), x[best] / np.linalg.norm(x[best]), int(pts.shape[0]),
                           iterations, seed, coarse_min, num.m, num.n)


def _golden_vectorised(f, x: np.ndarray, dirs: np.ndarray, step: float, iters: int = 30):
    """Golden-section search of f(cos t x + sin t d) over t in [-step, step], row-wise."""
    def g(t):
        z = np.cos(t)[:, None] * x + np.sin(t)[:, None] * dirs
        return f(z)

    a = np.full(len(x), -step)
    b = np.full(len(x), step)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = g(c), g(d)
    for _ in range(iters):
        left = fc < fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        new = np.where(left, b - GOLDEN * (b - a), a + GOLDEN * (b - a))
        fnew = g(new)
        c, d, fc, fd = (np.where(left, new, d), np.where(left, c, new),
                        np.where(left, fnew, fd), np.where(left, fc, fnew))
    t = np.where(fc < fd, c, d)
    ft = np.minimum(fc, fd)
    return t, ft


# ---------------------------------------------------------------------------
# Monte Carlo transfer to the original variables
# ---------------------------------------------------------------------------

@dataclass
class Check38Report:
    m: int
    n: int
    passed: bool
    trials: int
    violations: int
    C: float
    min_observed_ratio: float
    substitution_error: float
    seed: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def eta_tilde(eta: np.ndarray, m: int) -> np.ndarray:
    """Inverse of eta~ -> |eta~|^(2m-1) eta~."""
    return np.sign(eta) * np.abs(eta) ** (1.0 / (2 * m))


def check_38_from_39(m: int, n: int, trials: int = 100_000, C: float | None = None, seed: int = 0,
                     box: float = 10.0, rel_tol: float = 1e-6,
                     sphere: SphereMinReport | None = None) -> Check38Report:
    """Random (tau, eta, xi) in a box: LHS >= (1 - rel_tol) C (eta^2 + (|xi|^2 + tau^2)^(2m))."""
    if C is None:
        sphere = sphere or min_ratio_on_sphere(lhs_form_39(m, n), rhs_form_39(m, n), seed=seed)
        C = sphere.min_value
    rng = np.random.default_rng(seed)
    tau = rng.uniform(-box, box, trials)
    eta = rng.uniform(-box, box, trials)
    xi = rng.uniform(-box, box, (trials, n))
    direct = _symbols(m, n).lhs(tau, eta, xi)
    rhs = eta ** 2 + (np.sum(xi * xi, axis=1) + tau ** 2) ** (2 * m)
    z = np.column_stack([tau, eta_tilde(eta, m), xi])
    via_form = lhs_form_39(m, n).evaluate(z)
    rhs_form = rhs_form_39(m, n).evaluate(z)
    subst = float(max(np.max(np.abs(via_form - direct) / direct),
                      np.max(np.abs(rhs_form - rhs) / rhs)))
    ratio = direct / rhs
    violations = int(np.count_nonzero(direct < (1 - rel_tol) * C * rhs))
    return Check38Report(m, n, violations == 0 and subst <= 1e-9, trials, violations, float(C),
                         float(np.min(ratio)), subst, seed)
