"""Uniform periodic grids, FFT differentiation, quadrature and conjugated operators.

Grids cover ``[-L_j, L_j)`` with ``N_j`` points per axis.  A ``GridFunction``
may declare a support box; it must sit inside the grid with at least
``PAD_FRACTION`` of the half-width free on both sides, which keeps periodic
wrap-around out of the working tolerance.  Derivatives of a compactly
supported function are again supported in the same box, and the outputs are
zeroed outside it.

Frequency convention: the discrete ``D = -i d/dx`` multiplies mode ``k`` by
``2*pi*k/(N*h)`` with the Nyquist mode mapped to 0, so that ``D**a D**b`` and
``D**(a+b)`` coincide exactly.
"""
from __future__ import annotations

import csv
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _accel
from .polycalc import MultiIndex, Polynomial, as_multi_index

PAD_FRACTION = 0.25
MIN_POINTS = 16
EXP_GUARD = 600.0
VANISH_REL = 1e-13
MAX_DERIVATIVE_ORDER = 14


class PaddingError(ValueError):
    """Support box too close to the grid boundary."""


class OverflowGuardError(ValueError):
    """Exponential weight would overflow double precision."""


def _fft_friendly(n: int) -> bool:
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class Grid:
    extents: tuple[float, ...]
    counts: tuple[int, ...]
    time_axis: bool = False

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(float(L) for L in self.extents))
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))
        if len(self.extents) != len(self.counts) or not self.extents:
            raise ValueError("extents and counts must be nonempty and of equal length")
        for L, n in zip(self.extents, self.counts):
            if not L > 0:
                raise ValueError(f"extent must be positive, got {L}")
            if n < MIN_POINTS or n % 2 or not _fft_friendly(n):
                raise ValueError(f"point count must be an even 5-smooth integer >= {MIN_POINTS}, got {n}")

    @classmethod
    def uniform(cls, dimension: int, L: float, N: int, time_axis: bool = False) -> Grid:
        return cls((L,) * dimension, (N,) * dimension, time_axis)

    @property
    def dimension(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(2 * L / n for L, n in zip(self.extents, self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, j: int) -> np.ndarray:
        return -self.extents[j] + self.spacing[j] * np.arange(self.counts[j])

    def mesh(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        return np.meshgrid(*[self.axis(j) for j in range(self.dimension)], indexing="ij", sparse=True)

    def frequencies(self, j: int) -> np.ndarray:
        n = self.counts[j]
        xi = 2 * np.pi * np.fft.fftfreq(n, d=self.spacing[j])
        xi[n // 2] = 0.0
        return xi

    def frequency_mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.frequencies(j) for j in range(self.dimension)], indexing="ij", sparse=True)

    def refined(self, factor: int = 2) -> Grid:
        return Grid(self.extents, tuple(n * factor for n in self.counts), self.time_axis)

    def to_json(self) -> dict:
        return {"dims": self.dimension, "L": list(self.extents), "N": list(self.counts)}


def _box_mask(grid: Grid, box) -> np.ndarray:
    mask = np.ones(grid.shape, dtype=bool)
    for j, (lo, hi) in enumerate(box):
        x = grid.axis(j)
        sel = (x >= lo) & (x <= hi)
        shape = [1] * grid.dimension
        shape[j] = -1
        mask &= sel.reshape(shape)
    return mask


def check_padding(grid: Grid, box) -> None:
    if len(box) != grid.dimension:
        raise ValueError("support box needs one interval per axis")
    for j, (lo, hi) in enumerate(box):
        L = grid.extents[j]
        if not lo < hi:
            raise ValueError(f"empty support interval on axis {j}")
        if lo + L < PAD_FRACTION * L or L - hi < PAD_FRACTION * L:
            raise PaddingError(
                f"support [{lo:g}, {hi:g}] on axis {j} leaves less than "
                f"{PAD_FRACTION:.0%} of the half-width {L:g} as padding")


class GridFunction:
    """Complex samples on a grid, optionally with a declared compact support box."""

    def __init__(self, grid: Grid, values, support_box: Sequence[tuple[float, float]] | None = None,
                 *, check: bool = True):
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != grid.shape:
            raise ValueError(f"values have shape {values.shape}, grid is {grid.shape}")
        if support_box is not None:
            support_box = tuple((float(lo), float(hi)) for lo, hi in support_box)
            check_padding(grid, support_box)
            if check:
                mask = _box_mask(grid, support_box)
                scale = np.max(np.abs(values)) if values.size else 0.0
                outside = np.max(np.abs(values[~mask]), initial=0.0)
                if outside > VANISH_REL * max(scale, 1e-300):
                    raise ValueError("samples do not vanish outside the declared support box")
        values = values.copy()
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.support_box = support_box

    @cached_property
    def support_mask(self) -> np.ndarray | None:
        if self.support_box is None:
            return None
        return _box_mask(self.grid, self.support_box)

    @cached_property
    def spectrum(self) -> np.ndarray:
        return np.fft.fftn(self.values)

    def with_values(self, values) -> GridFunction:
        """Same grid and support, new samples (zeroed outside the support)."""
        values = np.asarray(values, dtype=np.complex128)
        if self.support_mask is not None:
            values = np.where(self.support_mask, values, 0.0)
        return GridFunction(self.grid, values, self.support_box, check=False)

    def __mul__(self, c: complex) -> GridFunction:
        return GridFunction(self.grid, self.values * c, self.support_box, check=False)

    __rmul__ = __mul__

    def __add__(self, other: GridFunction) -> GridFunction:
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        box = _union_box(self.support_box, other.support_box)
        return GridFunction(self.grid, self.values + other.values, box, check=False)

    def __sub__(self, other: GridFunction) -> GridFunction:
        return self + (-1.0) * other

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _union_box(a, b):
    if a is None or b is None:
        return None
    return tuple((min(x[0], y[0]), max(x[1], y[1])) for x, y in zip(a, b))


@dataclass(frozen=True, eq=False)
class WeightField:
    """Real weight samples on a grid, with an optional analytic descriptor."""

    grid: Grid
    values: np.ndarray
    descriptor: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        vals = np.broadcast_to(vals, self.grid.shape).copy()
        if not np.all(np.isfinite(vals)):
            raise ValueError("weight is not finite everywhere on the grid")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls, grid: Grid) -> WeightField:
        return cls(grid, np.zeros(grid.shape), {"kind": "quadratic", "a": [0.0] * grid.dimension,
                                                "b": [0.0] * grid.dimension})

    @classmethod
    def quadratic(cls, grid: Grid, a: Sequence[float], b: Sequence[float]) -> WeightField:
        """Q(x) = sum a_j x_j + sum b_j x_j**2 / 2."""
        a = [float(v) for v in a]
        b = [float(v) for v in b]
        if len(a) != grid.dimension or len(b) != grid.dimension:
            raise ValueError("quadratic weight coefficients must match the grid dimension")
        q = np.zeros(grid.shape)
        for j, x in enumerate(grid.mesh()):
            q = q + a[j] * x + 0.5 * b[j] * x * x
        return cls(grid, q, {"kind": "quadratic", "a": a, "b": b})

    def scaled(self, c: float) -> WeightField:
        return WeightField(self.grid, c * self.values, {**self.descriptor, "scale": c})

    def max_on(self, mask: np.ndarray | None) -> float:
        vals = self.values if mask is None else self.values[mask]
        return float(np.max(vals))


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def _symbol_on_lattice(P: Polynomial, grid: Grid) -> np.ndarray:
    freqs = [grid.frequencies(j) for j in range(grid.dimension)]
    out = np.zeros(grid.shape, dtype=np.complex128)
    for alpha, c in P.terms.items():
        term = np.array(c, dtype=np.complex128)
        for j, e in enumerate(alpha):
            if e:
                shape = [1] * grid.dimension
                shape[j] = -1
                term = term * (freqs[j] ** e).reshape(shape)
        out = out + term
    return out


def spectral_derivative(f: GridFunction, beta: Sequence[int]) -> GridFunction:
    """D**beta f = (-i d)**beta f by FFT."""
    beta = as_multi_index(beta, f.grid.dimension)
    if sum(beta) > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order {sum(beta)} exceeds {MAX_DERIVATIVE_ORDER}")
    if not any(beta):
        return f
    return apply_symbol(Polynomial.monomial(beta), f)


def apply_symbol(P: Polynomial, f: GridFunction) -> GridFunction:
    """P(D) f via one FFT round trip."""
    if P.dimension != f.grid.dimension:
        raise ValueError(f"symbol dimension {P.dimension} != grid dimension {f.grid.dimension}")
    out = np.fft.ifftn(f.spectrum * _symbol_on_lattice(P, f.grid))
    return f.with_values(out)


def derivative_table(f: GridFunction, betas: Sequence[MultiIndex]) -> dict[MultiIndex, np.ndarray]:
    """Samples of D**beta f for several beta, sharing one forward FFT."""
    return {tuple(b): spectral_derivative(f, b).values for b in betas}


def _guard(W: WeightField, mask: np.ndarray | None) -> None:
    vals = W.values if mask is None else W.values[mask]
    if vals.size and np.max(np.abs(vals)) / 2 > EXP_GUARD:
        raise OverflowGuardError(
            f"max|W|/2 = {np.max(np.abs(vals)) / 2:.4g} exceeds {EXP_GUARD:g}; "
            "renormalise the weight (subtract its maximum on the support)")


def apply_conjugated(P: Polynomial, W: WeightField, sign: int, v: GridFunction) -> GridFunction:
    """P(D + sign*i*grad(W)/2) v, computed as e^{sign W/2} P(D) (e^{-sign W/2} v)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if W.grid != v.grid:
        raise ValueError("weight and function live on different grids")
    mask = v.support_mask
    _guard(W, mask)
    half = 0.5 * W.values
    if mask is not None:
        half = np.where(mask, half, 0.0)
    inner = v.with_values(np.exp(-sign * half) * v.values)
    outer = apply_symbol(P, inner)
    return v.with_values(np.exp(sign * half) * outer.values)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def weighted_l2(f: GridFunction, W: WeightField | None = None) -> float:
    """Rectangle rule for the integral of e^W |f|^2 (over the support box if declared)."""
    sq = f.values.real ** 2 + f.values.imag ** 2
    mask = f.support_mask
    if W is not None and W.grid != f.grid:
        raise ValueError("weight and function live on different grids")
    if mask is not None:
        sq = sq[mask]
        w = None if W is None else W.values[mask]
    else:
        sq = sq.ravel()
        w = None if W is None else W.values.ravel()
    if not np.all(np.isfinite(sq)):
        raise ValueError("non-finite samples in weighted_l2")
    total = float(np.sum(sq)) if w is None else _accel.weighted_sum(w, sq)
    if not np.isfinite(total):
        raise ValueError("weighted_l2 overflowed; renormalise the weight")
    return total * f.grid.cell_volume


def parseval_l2(f: GridFunction) -> float:
    """Unweighted L2 norm squared computed from the spectrum."""
    return float(np.sum(np.abs(f.spectrum) ** 2)) * f.grid.cell_volume / np.prod(f.grid.shape)


# ---------------------------------------------------------------------------
# test-function building blocks
# ---------------------------------------------------------------------------

def mollifier(r, sharpness: float = 4.0) -> np.ndarray:
    """exp(a - a/(1 - r**2)) on |r| < 1, zero outside; equals 1 at r = 0."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    q = 1.0 - r[inside] ** 2
    out[inside] = np.exp(sharpness - sharpness / q)
    return out


def fourier_resample(f: GridFunction, grid: Grid) -> GridFunction:
    """Band-limited interpolation of f onto a finer grid with the same extents."""
    if grid.extents != f.grid.extents or grid.dimension != f.grid.dimension:
        raise ValueError("resampling needs matching extents")
    spec = np.fft.fftshift(f.spectrum)
    pads = []
    for n_old, n_new in zip(f.grid.counts, grid.counts):
        extra = n_new - n_old
        if extra < 0:
            raise ValueError("fourier_resample only refines")
        pads.append((extra // 2, extra - extra // 2))
    spec = np.pad(spec, pads)
    scale = np.prod(grid.counts) / np.prod(f.grid.counts)
    values = np.fft.ifftn(np.fft.ifftshift(spec)) * scale
    if f.support_box is not None:
        values = np.where(_box_mask(grid, f.support_box), values, 0.0)
    return GridFunction(grid, values, f.support_box, check=False)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

_MAGIC = b"CLGF"


def save_binary(f: GridFunction, path: str | Path) -> None:
    """Little-endian container: magic, version, d, extents[d], counts[d], re/im pairs."""
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", 1, g.dimension))
        fh.write(struct.pack(f"<{g.dimension}d", *g.extents))
        fh.write(struct.pack(f"<{g.dimension}Q", *g.counts))
        inter = np.empty(f.values.size * 2, dtype="<f8")
        flat = f.values.ravel(order="C")
        inter[0::2] = flat.real
        inter[1::2] = flat.imag
        fh.write(inter.tobytes())


def load_binary(path: str | Path) -> GridFunction:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError("not a grid-function container")
    version, d = struct.unpack_from("<II", data, 4)
    if version != 1:
        raise ValueError(f"unsupported container version {version}")
    off = 12
    extents = struct.unpack_from(f"<{d}d", data, off)
    off += 8 * d
    counts = struct.unpack_from(f"<{d}Q", data, off)
    off += 8 * d
    inter = np.frombuffer(data, dtype="<f8", offset=off)
    grid = Grid(extents, counts)
    values = (inter[0::2] + 1j * inter[1::2]).reshape(grid.shape)
    return GridFunction(grid, values)


def save_csv(f: GridFunction, path: str | Path, fixed: dict[int, int] | None = None) -> None:
    """Write a 1-D or 2-D slice; axes beyond the first two are fixed at ``fixed`` or the centre."""
    g = f.grid
    fixed = dict(fixed or {})
    free = [j for j in range(g.dimension) if j not in fixed][:2]
    index = []
    for j in range(g.dimension):
        if j in free:
            index.append(slice(None))
        else:
            index.append(fixed.get(j, g.counts[j] // 2))
    sl = f.values[tuple(index)]
    axes = [g.axis(j) for j in free]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in free] + ["re", "im"])
        for idx in np.ndindex(sl.shape):
            coords = [repr(float(axes[k][i])) for k, i in enumerate(idx)]
            w.writerow(coords + [repr(float(sl[idx].real)), repr(float(sl[idx].imag))])


def random_bumps(grid: Grid, box: Sequence[tuple[float, float]], count: int, *, bump_count: int = 3,
                 seed: int = 0, modulation: float = 0.0, amplitude: tuple[float, float] = (0.5, 1.5),
                 min_radius: float = 0.3, sharpness: float = 4.0,
                 max_wavenumber: float | None = None) -> list[GridFunction]:
    """Random superpositions of separable mollifier bumps inside ``box``.

    Each bump has a random centre and per-axis radius (at least ``min_radius``
    of the box half-width) so that it stays inside the box, a random complex
    amplitude, and a plane-wave modulation whose per-axis wavenumber is drawn
    from ``[-modulation, modulation] * Nyquist``, or from
    ``[-max_wavenumber, max_wavenumber]`` when that is given (it may not
    exceed Nyquist/4).  Deterministic per seed.
    """
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    check_padding(grid, box)
    rng = np.random.default_rng(seed)
    mesh = grid.mesh()
    nyquist = [np.pi / h for h in grid.spacing]
    if max_wavenumber is not None:
        if not 0 <= max_wavenumber <= min(nyquist) / 4:
            raise ValueError(f"max_wavenumber must lie in [0, Nyquist/4 = {min(nyquist) / 4:g}]")
        kmax = [float(max_wavenumber)] * grid.dimension
    else:
        kmax = [modulation * k for k in nyquist]
    family = []
    for _ in range(count):
        total = np.zeros(grid.shape, dtype=np.complex128)
        for _ in range(bump_count):
            profile = np.ones((1,) * grid.dimension)
            phase = np.zeros((1,) * grid.dimension)
            for j, (lo, hi) in enumerate(box):
                half = 0.5 * (hi - lo)
                mid = 0.5 * (hi + lo)
                r = half * rng.uniform(min_radius, 1.0)
                c = mid + rng.uniform(-(half - r), half - r)
                profile = profile * mollifier((mesh[j] - c) / r, sharpness)
                k = rng.uniform(-kmax[j], kmax[j])
                phase = phase + k * mesh[j]
            amp = rng.uniform(*amplitude) * np.exp(2j * np.pi * rng.uniform())
            total += amp * profile * np.exp(1j * phase)
        family.append(GridFunction(grid, total, box, check=False))
    return family
