"""Constant-coefficient multivariate polynomials and 1-D differential operators.

Polynomials are immutable maps ``multi-index -> complex coefficient``.  Every
arithmetic result is pruned: coefficients below ``PRUNE_REL * max|c|`` are
dropped so that the term map stays canonical and equality is testable.

``Ode1Operator`` stores ``sum_k c_k(s) D_s**k`` with ``D_s = -i d/ds`` and the
polynomial coefficients kept to the left of the derivative powers.
"""
from __future__ import annotations

import cmath
import json
import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from . import _accel

PRUNE_REL = 1e-14

MultiIndex = tuple[int, ...]


# ---------------------------------------------------------------------------
# multi-indices
# ---------------------------------------------------------------------------

def as_multi_index(alpha: Iterable[int], dimension: int | None = None) -> MultiIndex:
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise ValueError(f"multi-index entries must be nonnegative, got {alpha}")
    if dimension is not None and len(alpha) != dimension:
        raise ValueError(f"multi-index {alpha} has length {len(alpha)}, expected {dimension}")
    return alpha


def order(alpha: MultiIndex) -> int:
    return sum(alpha)


def mi_factorial(alpha: MultiIndex) -> int:
    return math.prod(math.factorial(a) for a in alpha)


def unit(dimension: int, j: int, k: int = 1) -> MultiIndex:
    """The multi-index k * e_j."""
    return tuple(k if i == j else 0 for i in range(dimension))


def multi_indices(dimension: int, max_order: int, min_order: int = 0) -> Iterator[MultiIndex]:
    """All multi-indices with min_order <= |alpha| <= max_order, graded then lex."""
    for total in range(max(min_order, 0), max_order + 1):
        for alpha in _compositions(total, dimension):
            yield alpha


def _compositions(total: int, parts: int) -> Iterator[MultiIndex]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------

def _prune(terms: dict[MultiIndex, complex]) -> dict[MultiIndex, complex]:
    if not terms:
        return {}
    cmax = max(abs(c) for c in terms.values())
    if cmax == 0.0:
        return {}
    cut = PRUNE_REL * cmax
    return {k: complex(c) for k, c in terms.items() if abs(c) > cut}


class Polynomial:
    """Polynomial in ``dimension`` variables with complex coefficients."""

    __slots__ = ("_dimension", "_terms")

    def __init__(self, dimension: int, terms: Mapping[Iterable[int], complex] | None = None):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        acc: dict[MultiIndex, complex] = {}
        for alpha, c in (terms or {}).items():
            alpha = as_multi_index(alpha, dimension)
            acc[alpha] = acc.get(alpha, 0j) + complex(c)
        if not all(cmath.isfinite(c) for c in acc.values()):
            raise ValueError("polynomial coefficients must be finite")
        self._dimension = dimension
        self._terms = MappingProxyType(_prune(acc))

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls, dimension: int) -> Polynomial:
        return cls(dimension)

    @classmethod
    def constant(cls, dimension: int, c: complex) -> Polynomial:
        return cls(dimension, {(0,) * dimension: c})

    @classmethod
    def variable(cls, dimension: int, j: int) -> Polynomial:
        return cls(dimension, {unit(dimension, j): 1.0})

    @classmethod
    def monomial(cls, alpha: Iterable[int], c: complex = 1.0) -> Polynomial:
        alpha = as_multi_index(alpha)
        return cls(len(alpha), {alpha: c})

    # -- basic accessors --------------------------------------------------
    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def terms(self) -> Mapping[MultiIndex, complex]:
        return self._terms

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((order(a) for a in self._terms), default=-1)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, alpha: Iterable[int]) -> complex:
        return self._terms.get(as_multi_index(alpha, self._dimension), 0j)

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def homogeneous_part(self, degree: int) -> Polynomial:
        return Polynomial(self._dimension, {a: c for a, c in self._terms.items() if order(a) == degree})

    def _check_dim(self, other: Polynomial) -> None:
        if other.dimension != self._dimension:
            raise ValueError(
                f"dimension mismatch: {self._dimension} vs {other.dimension}")

    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            self._check_dim(other)
            return other
        if isinstance(other, (int, float, complex, np.number)):
            return Polynomial.constant(self._dimension, complex(other))
        return NotImplemented

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other) -> Polynomial:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc = dict(self._terms)
        for a, c in other._terms.items():
            acc[a] = acc.get(a, 0j) + c
        return Polynomial(self._dimension, acc)

    __radd__ = __add__

    def __neg__(self) -> Polynomial:
        return Polynomial(self._dimension, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other) -> Polynomial:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> Polynomial:
        return (-self) + other

    def __mul__(self, other) -> Polynomial:
        if isinstance(other, (int, float, complex, np.number)):
            return Polynomial(self._dimension, {a: c * other for a, c in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc: dict[MultiIndex, complex] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                k = tuple(x + y for x, y in zip(a, b))
                acc[k] = acc.get(k, 0j) + ca * cb
        return Polynomial(self._dimension, acc)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> Polynomial:
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("exponent must be a nonnegative integer")
        result = Polynomial.constant(self._dimension, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # -- comparison -------------------------------------------------------
    def isclose(self, other: Polynomial, atol: float = 1e-12) -> bool:
        """Coefficientwise comparison after normalising by the largest coefficient."""
        self._check_dim(other)
        scale = max(self.max_abs_coefficient(), other.max_abs_coefficient(), 1e-300)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(k) - other.coefficient(k)) <= atol * scale for k in keys)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial) or other.dimension != self._dimension:
            return NotImplemented
        return self.isclose(other)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        if not self._terms:
            return f"Polynomial({self._dimension}, 0)"
        parts = []
        for a in sorted(self._terms, key=lambda a: (-order(a), [-x for x in a])):
            c = self._terms[a]
            mono = "*".join(f"x{j}^{e}" if e > 1 else f"x{j}" for j, e in enumerate(a) if e)
            parts.append(f"({c.real:.6g}{c.imag:+.6g}j)" + (f"*{mono}" if mono else ""))
        return f"Polynomial({self._dimension}, " + " + ".join(parts) + ")"

    # -- calculus ---------------------------------------------------------
    def derivative(self, alpha: Iterable[int]) -> Polynomial:
        """Exact mixed partial derivative d^alpha P."""
        alpha = as_multi_index(alpha, self._dimension)
        acc: dict[MultiIndex, complex] = {}
        for a, c in self._terms.items():
            if any(x < y for x, y in zip(a, alpha)):
                continue
            factor = math.prod(math.perm(x, y) for x, y in zip(a, alpha))
            k = tuple(x - y for x, y in zip(a, alpha))
            acc[k] = acc.get(k, 0j) + c * factor
        return Polynomial(self._dimension, acc)

    def conjugate(self) -> Polynomial:
        return Polynomial(self._dimension, {a: c.conjugate() for a, c in self._terms.items()})

    def evaluate(self, z: Sequence[complex]) -> complex:
        """Horner-style evaluation at a single point."""
        z = np.asarray(z, dtype=np.complex128).ravel()
        if z.shape[0] != self._dimension:
            raise ValueError(f"point has length {z.shape[0]}, expected {self._dimension}")
        return _horner(dict(self._terms), tuple(complex(v) for v in z), 0)

    def __call__(self, z: Sequence[complex]) -> complex:
        return self.evaluate(z)

    def exponent_table(self) -> tuple[np.ndarray, np.ndarray]:
        keys = list(self._terms)
        exps = np.array(keys, dtype=np.int64).reshape(len(keys), self._dimension)
        coeffs = np.array([self._terms[k] for k in keys], dtype=np.complex128)
        return exps, coeffs

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at each row of an (M, dimension) array."""
        points = np.asarray(points, dtype=np.complex128)
        if points.ndim != 2 or points.shape[1] != self._dimension:
            raise ValueError(f"points must have shape (M, {self._dimension})")
        exps, coeffs = self.exponent_table()
        return _accel.poly_eval_batch(exps, coeffs, points)

    def shift(self, w: Sequence[complex]) -> Polynomial:
        """The polynomial xi -> P(xi + w), via Taylor expansion at w."""
        w = np.asarray(w, dtype=np.complex128).ravel()
        if w.shape[0] != self._dimension:
            raise ValueError(f"shift has length {w.shape[0]}, expected {self._dimension}")
        acc = {}
        for alpha in multi_indices(self._dimension, max(self.degree, 0)):
            acc[alpha] = self.derivative(alpha).evaluate(w) / mi_factorial(alpha)
        return Polynomial(self._dimension, acc)

    def substitute(self, images: Sequence[Polynomial]) -> Polynomial:
        """Compose: replace variable j by images[j] (all images share one dimension)."""
        if len(images) != self._dimension:
            raise ValueError(f"need {self._dimension} images, got {len(images)}")
        target = images[0].dimension
        for p in images:
            if p.dimension != target:
                raise ValueError("substitution images must share a dimension")
        cache: dict[tuple[int, int], Polynomial] = {}

        def power(j: int, e: int) -> Polynomial:
            if (j, e) not in cache:
                cache[(j, e)] = images[j] ** e
            return cache[(j, e)]

        result = Polynomial.zero(target)
        for a, c in self._terms.items():
            term = Polynomial.constant(target, c)
            for j, e in enumerate(a):
                if e:
                    term = term * power(j, e)
            result = result + term
        return result

    def embed(self, dimension: int, axes: Sequence[int]) -> Polynomial:
        """Re-express in a larger variable set; variable j goes to slot axes[j]."""
        if len(axes) != self._dimension:
            raise ValueError("axes must list one slot per variable")
        acc = {}
        for a, c in self._terms.items():
            k = [0] * dimension
            for j, e in zip(axes, a):
                k[j] = e
            acc[tuple(k)] = c
        return Polynomial(dimension, acc)

    def divmod(self, divisor: Polynomial) -> tuple[Polynomial, Polynomial]:
        """Multivariate division by a single polynomial, lex order x0 > x1 > ...

        Returns (quotient, remainder) with self = quotient * divisor + remainder
        and no remainder term divisible by the divisor's leading monomial.
        A single divisor is a Groebner basis of its ideal, so the remainder is
        zero exactly when the divisor divides self.
        """
        self._check_dim(divisor)
        if divisor.is_zero():
            raise ZeroDivisionError("division by the zero polynomial")
        lead = max(divisor.terms)
        lead_c = divisor.terms[lead]
        scale = self.max_abs_coefficient()
        cut = PRUNE_REL * max(scale, 1e-300)
        work = dict(self._terms)
        quotient: dict[MultiIndex, complex] = {}
        remainder: dict[MultiIndex, complex] = {}
        while work:
            top = max(work)
            c = work.pop(top)
            if abs(c) <= cut:
                continue
            if all(x >= y for x, y in zip(top, lead)):
                k = tuple(x - y for x, y in zip(top, lead))
                q = c / lead_c
                if not cmath.isfinite(q):
                    raise OverflowError("quotient coefficient overflows; the divisor's leading coefficient is too small")
                quotient[k] = quotient.get(k, 0j) + q
                for b, cb in divisor.terms.items():
                    if b == lead:
                        continue
                    mono = tuple(x + y for x, y in zip(k, b))
                    work[mono] = work.get(mono, 0j) - q * cb
            else:
                remainder[top] = remainder.get(top, 0j) + c
        # remainder is kept unpruned relative to itself: its size matters
        rem = Polynomial.__new__(Polynomial)
        rem._dimension = self._dimension
        rem._terms = MappingProxyType({k: v for k, v in remainder.items() if abs(v) > cut})
        return Polynomial(self._dimension, quotient), rem

    # -- serialisation ----------------------------------------------------
    def to_json(self) -> dict:
        terms = [
            {"alpha": list(a), "re": self._terms[a].real, "im": self._terms[a].imag}
            for a in sorted(self._terms)
        ]
        return {"dimension": self._dimension, "terms": terms}

    @classmethod
    def from_json(cls, data: Mapping | str) -> Polynomial:
        if isinstance(data, str):
            data = json.loads(data)
        d = int(data["dimension"])
        return cls(d, {tuple(t["alpha"]): complex(t.get("re", 0.0), t.get("im", 0.0))
                       for t in data["terms"]})


def _horner(terms: dict[MultiIndex, complex], z: tuple[complex, ...], j: int) -> complex:
    # nested Horner in variable j, recursing on the remaining variables
    if not terms:
        return 0j
    if j == len(z) - 1:
        deg = max(a[j] for a in terms)
        acc = 0j
        for e in range(deg, -1, -1):
            acc = acc * z[j] + sum(c for a, c in terms.items() if a[j] == e)
        return acc
    by_power: dict[int, dict[MultiIndex, complex]] = {}
    for a, c in terms.items():
        by_power.setdefault(a[j], {})[a] = c
    acc = 0j
    for e in range(max(by_power), -1, -1):
        acc = acc * z[j] + _horner(by_power.get(e, {}), z, j + 1)
    return acc


def derivative(P: Polynomial, alpha: Iterable[int]) -> Polynomial:
    return P.derivative(alpha)


def conjugate(P: Polynomial) -> Polynomial:
    return P.conjugate()


def shift(P: Polynomial, w: Sequence[complex]) -> Polynomial:
    return P.shift(w)


def evaluate(P: Polynomial, z: Sequence[complex]) -> complex:
    return P.evaluate(z)


def p2(n: int, dimension: int | None = None, offset: int = 0) -> Polynomial:
    """P_2(xi) = sum xi_j**2 over n consecutive variables starting at ``offset``."""
    dimension = n if dimension is None else dimension
    return Polynomial(dimension, {unit(dimension, offset + j, 2): 1.0 for j in range(n)})


# ---------------------------------------------------------------------------
# operator symbols
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorSymbol:
    """Symbol of P_p = i*eta + |xi|^(2m) or P_s = eta + |xi|^(2m), variables (eta, xi_1..xi_n)."""

    kind: str
    m: int
    n: int
    symbol: Polynomial

    @classmethod
    def parabolic(cls, m: int, n: int) -> OperatorSymbol:
        return cls("parabolic", m, n, _evolution_symbol(m, n, 1j))

    @classmethod
    def schrodinger(cls, m: int, n: int) -> OperatorSymbol:
        return cls("schrodinger", m, n, _evolution_symbol(m, n, 1.0))

    @classmethod
    def make(cls, kind: str, m: int, n: int) -> OperatorSymbol:
        if kind == "parabolic":
            return cls.parabolic(m, n)
        if kind == "schrodinger":
            return cls.schrodinger(m, n)
        raise ValueError(f"unknown operator kind {kind!r}")

    @classmethod
    def custom(cls, symbol: Polynomial, m: int = 1) -> OperatorSymbol:
        return cls("custom", m, symbol.dimension - 1, symbol)

    def to_json(self) -> dict:
        return {"kind": self.kind, "m": self.m, "n": self.n, "symbol": self.symbol.to_json()}


def _evolution_symbol(m: int, n: int, time_coeff: complex) -> Polynomial:
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    d = n + 1
    # expand (xi_1^2 + ... + xi_n^2)^m term by term via the multinomial theorem
    terms: dict[MultiIndex, complex] = {unit(d, 0): time_coeff}
    for beta in multi_indices(n, m, m):
        coeff = math.factorial(m) / mi_factorial(beta)
        terms[(0,) + tuple(2 * b for b in beta)] = coeff
    return Polynomial(d, terms)


# ---------------------------------------------------------------------------
# 1-D differential operators with polynomial coefficients
# ---------------------------------------------------------------------------

class Ode1Operator:
    """sum_k c_k(s) D_s**k, coefficients to the left of derivatives."""

    __slots__ = ("_coeffs",)

    def __init__(self, coeffs: Mapping[int, Polynomial | complex] | None = None):
        acc: dict[int, Polynomial] = {}
        for k, c in (coeffs or {}).items():
            if not isinstance(c, Polynomial):
                c = Polynomial.constant(1, c)
            if c.dimension != 1:
                raise ValueError("coefficients must be polynomials in one variable")
            if int(k) < 0:
                raise ValueError("derivative order must be nonnegative")
            acc[int(k)] = acc.get(int(k), Polynomial.zero(1)) + c
        self._coeffs = MappingProxyType({k: c for k, c in sorted(acc.items()) if not c.is_zero()})

    @classmethod
    def identity(cls) -> Ode1Operator:
        return cls({0: 1.0})

    @classmethod
    def d(cls) -> Ode1Operator:
        return cls({1: 1.0})

    @classmethod
    def multiplication(cls, c: Polynomial | complex) -> Ode1Operator:
        return cls({0: c})

    @property
    def coeffs(self) -> Mapping[int, Polynomial]:
        return self._coeffs

    @property
    def order(self) -> int:
        return max(self._coeffs, default=-1)

    def coefficient(self, k: int) -> Polynomial:
        return self._coeffs.get(k, Polynomial.zero(1))

    def __add__(self, other: Ode1Operator) -> Ode1Operator:
        acc = dict(self._coeffs)
        for k, c in other._coeffs.items():
            acc[k] = acc.get(k, Polynomial.zero(1)) + c
        return Ode1Operator(acc)

    def __sub__(self, other: Ode1Operator) -> Ode1Operator:
        return self + Ode1Operator({k: -c for k, c in other._coeffs.items()})

    def __mul__(self, scalar: complex) -> Ode1Operator:
        return Ode1Operator({k: c * scalar for k, c in self._coeffs.items()})

    __rmul__ = __mul__

    def __matmul__(self, other: Ode1Operator) -> Ode1Operator:
        return compose1d(self, other)

    def isclose(self, other: Ode1Operator, atol: float = 1e-12) -> bool:
        keys = set(self._coeffs) | set(other._coeffs)
        scale = max([c.max_abs_coefficient() for c in self._coeffs.values()]
                    + [c.max_abs_coefficient() for c in other._coeffs.values()] + [1e-300])
        for k in keys:
            diff = self.coefficient(k) - other.coefficient(k)
            if diff.max_abs_coefficient() > atol * scale:
                return False
        return True

    def __eq__(self, other) -> bool:
        if not isinstance(other, Ode1Operator):
            return NotImplemented
        return self.isclose(other)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return "Ode1Operator(" + ", ".join(f"D^{k}: {c!r}" for k, c in self._coeffs.items()) + ")"

    def apply(self, s: np.ndarray, derivs: Mapping[int, np.ndarray]) -> np.ndarray:
        """Evaluate sum_k c_k(s) * derivs[k] given precomputed D_s^k u samples."""
        out = np.zeros(np.shape(s), dtype=np.complex128)
        pts = np.asarray(s, dtype=np.complex128).reshape(-1, 1)
        for k, c in self._coeffs.items():
            out += c.evaluate_many(pts).reshape(np.shape(s)) * derivs[k]
        return out


def compose1d(A: Ode1Operator, B: Ode1Operator) -> Ode1Operator:
    """Exact product A*B, renormalised to coefficients-left order.

    Uses D^j (b f) = sum_l C(j, l) (D^l b) D^(j-l) f with D = -i d/ds.
    """
    acc: dict[int, Polynomial] = {}
    for j, a in A.coeffs.items():
        for k, b in B.coeffs.items():
            for l in range(0, min(j, max(b.degree, 0)) + 1):
                db = b.derivative((l,)) * (math.comb(j, l) * (-1j) ** l)
                if db.is_zero():
                    continue
                key = j - l + k
                acc[key] = acc.get(key, Polynomial.zero(1)) + a * db
    return Ode1Operator(acc)


def build_conjugated_power(sign: int, tau: float, K: int) -> Ode1Operator:
    """(D_s + sign * i * tau * (1 + s))**K by repeated composition."""
    if K < 0:
        raise ValueError("K must be >= 0")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    base = Ode1Operator({1: 1.0, 0: Polynomial(1, {(0,): sign * 1j * tau, (1,): sign * 1j * tau})})
    result = Ode1Operator.identity()
    for _ in range(K):
        result = compose1d(result, base)
    return result


def binomial_power(sign: int, tau: float, K: int) -> Ode1Operator:
    """(D_s + sign * i * tau)**K, constant coefficients."""
    return Ode1Operator({k: math.comb(K, k) * (sign * 1j * tau) ** (K - k) for k in range(K + 1)})


__all__ = [
    "MultiIndex", "Polynomial", "OperatorSymbol", "Ode1Operator",
    "as_multi_index", "order", "mi_factorial", "unit", "multi_indices",
    "derivative", "conjugate", "shift", "evaluate", "compose1d",
    "build_conjugated_power", "binomial_power", "p2",
]
