"""Carleman weights, admissible test families and tau-sweeps of the two main estimates.

Grids are space-time: axis 0 is t, axes 1..n are x_1..x_n, and every weight
depends on (t, x_n) only.  All weighted norms use the renormalised weight
``2 tau (phi - max_support phi)``; the constant shift cancels in every ratio
but keeps ``e^{2 tau phi}`` inside double precision.
"""
from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from .gridops import EXP_GUARD, Grid, GridFunction, OverflowGuardError, apply_symbol, derivative_table, random_bumps
from .polycalc import MultiIndex, OperatorSymbol, multi_indices, unit

DENOM_FLOOR = 1e-280
TAU_PHI_BOUND = 1200.0
SUPPORT_FRACTION = 0.7


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CarlemanWeight:
    """phi = -N t^2/2 + x_n + x_n^2/2 (standard) or -2 c t^2 + x_n + N x_n^2/2 (saddle)."""

    kind: str = "standard"
    N: float = 0.0
    c: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "N", float(self.N))
        if self.kind not in ("standard", "saddle"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if not (self.N >= 0 and math.isfinite(self.N)):
            raise ValueError(f"N must be finite and >= 0, got {self.N}")
        if self.kind == "saddle":
            if self.c is None or not self.c > 0:
                raise ValueError("the saddle weight needs c > 0")
            object.__setattr__(self, "c", float(self.c))

    def __call__(self, t, xn):
        t = np.asarray(t, dtype=float)
        xn = np.asarray(xn, dtype=float)
        if self.kind == "standard":
            return -self.N * t * t / 2 + xn + xn * xn / 2
        return -2 * self.c * t * t + xn + self.N * xn * xn / 2

    def gradient(self, t, xn) -> tuple[np.ndarray, np.ndarray]:
        """(d phi/dt, d phi/dx_n); the other spatial partials vanish."""
        t = np.asarray(t, dtype=float)
        xn = np.asarray(xn, dtype=float)
        if self.kind == "standard":
            return -self.N * t, 1 + xn
        return -4 * self.c * t, 1 + self.N * xn

    def on_grid(self, grid: Grid) -> np.ndarray:
        mesh = grid.mesh()
        return np.broadcast_to(self(mesh[0], mesh[-1]), grid.shape)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "N": self.N}
        if self.kind == "saddle":
            out["c"] = self.c
        return out


def make_weight(kind: str = "standard", N: float = 0.0, saddle_c: float | None = None) -> CarlemanWeight:
    if kind == "saddle" and saddle_c is None:
        saddle_c = 1.0
    return CarlemanWeight(kind, N, saddle_c if kind == "saddle" else None)


def preset_N(delta0: float, delta: float) -> float:
    """The time-confinement constant 4 delta0^-2 delta (1 - delta/4) used for the uniqueness argument."""
    if not (delta0 > 0 and 0 < delta < 1):
        raise ValueError("need delta0 > 0 and 0 < delta < 1")
    return 4 * delta / delta0 ** 2 * (1 - delta / 4)


# ---------------------------------------------------------------------------
# test families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestFunctionSpec:
    """Smooth bumps supported in |t|, |x_j| < delta_prime on a space-time grid."""

    __test__ = False  # not a pytest class

    delta_prime: float = 0.2
    n: int = 1
    bump_count: int = 3
    seed: int = 0
    amplitude: tuple[float, float] = (0.5, 1.5)
    wavenumber: float = 4.0  # modulation bound in units of 1/delta_prime

    def __post_init__(self):
        object.__setattr__(self, "amplitude", tuple(float(a) for a in self.amplitude))
        if not 0 < self.delta_prime < 1:
            raise ValueError(f"delta_prime must lie in (0, 1), got {self.delta_prime}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.bump_count < 1:
            raise ValueError("bump_count must be >= 1")
        if not self.wavenumber >= 0:
            raise ValueError("wavenumber must be >= 0")

    @property
    def box(self) -> list[tuple[float, float]]:
        return [(-self.delta_prime, self.delta_prime)] * (self.n + 1)

    def default_grid(self, points: int | None = None) -> Grid:
        """Extent delta'/0.7 per axis, so the support fills 70% of each half-width."""
        if points is None:
            points = 256 if self.n == 1 else 96
        L = self.delta_prime / SUPPORT_FRACTION
        return Grid((L,) * (self.n + 1), (points,) * (self.n + 1), time_axis=True)

    def to_json(self) -> dict:
        return asdict(self)


def generate_family(spec: TestFunctionSpec, grid: Grid | None = None, count: int = 16) -> list[GridFunction]:
    grid = grid or spec.default_grid()
    if grid.dimension != spec.n + 1:
        raise ValueError("grid must have 1 + n axes")
    return random_bumps(grid, spec.box, count, bump_count=spec.bump_count, seed=spec.seed,
                        max_wavenumber=spec.wavenumber / spec.delta_prime, amplitude=spec.amplitude)


# ---------------------------------------------------------------------------
# both sides of the estimates
# ---------------------------------------------------------------------------

def lhs_exponents(op: OperatorSymbol) -> dict[MultiIndex, int]:
    """Space-time derivative index -> power of tau multiplying its weighted norm."""
    m, n = op.m, op.n
    d = n + 1
    out: dict[MultiIndex, int] = {}
    if op.kind == "parabolic":
        out[unit(d, 0)] = -m
        for alpha in multi_indices(n, 2 * m):
            out[(0,) + alpha] = 3 * m - 2 * sum(alpha)
    elif op.kind == "schrodinger":
        for alpha in multi_indices(n, 2 * m - 2):
            out[(0,) + alpha] = 3 * m - 2 * sum(alpha)
        for alpha in multi_indices(n, 2 * m - 2, 2 * m - 2):
            companion = (0,) + alpha[:-1] + (alpha[-1] + 1,)
            out[companion] = 2 - m
    else:
        raise ValueError(f"no Carleman left side for operator kind {op.kind!r}")
    return out


@dataclass
class _Member:
    """tau-independent pieces of one test function, restricted to its support."""

    keys: list[MultiIndex]
    exponents: np.ndarray
    stack: np.ndarray  # (K + 1, M): |D^beta u|^2 per key, then |P u|^2
    phi: np.ndarray  # (M,) renormalised weight on the support
    shift: float


def _prepare(u: GridFunction, w: CarlemanWeight, op: OperatorSymbol, renormalize: bool = True) -> _Member:
    grid = u.grid
    if grid.dimension != op.n + 1 or op.symbol.dimension != grid.dimension:
        raise ValueError("operator and grid dimensions disagree")
    exps = lhs_exponents(op)
    keys = list(exps)
    mask = u.support_mask
    if mask is None:
        mask = np.ones(grid.shape, dtype=bool)
    derivs = derivative_table(u, keys)
    rows = [np.abs(derivs[k][mask]) ** 2 for k in keys]
    rows.append(np.abs(apply_symbol(op.symbol, u).values[mask]) ** 2)
    stack = np.vstack(rows) * grid.cell_volume
    if not np.all(np.isfinite(stack)):
        raise ValueError("non-finite derivative samples")
    phi = w.on_grid(grid)[mask]
    shift = float(np.max(phi)) if renormalize and phi.size else 0.0
    return _Member(keys, np.array([exps[k] for k in keys], dtype=float), stack, phi - shift, shift)


def _sums(member: _Member, taus: np.ndarray) -> np.ndarray:
    """(S, K+1) weighted integrals with weight exp(2 tau (phi - shift))."""
    if member.phi.size and 2 * np.max(taus) * np.max(np.abs(member.phi)) > 2 * EXP_GUARD:
        if member.shift == 0.0:
            raise OverflowGuardError("2 tau phi leaves the exponent range; renormalise the weight")
    out = _accel.weighted_sums_multi(member.phi, member.stack, 2.0 * taus)
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite weighted norm")
    return out


def carleman_lhs(u: GridFunction, tau: float, w: CarlemanWeight, op: OperatorSymbol,
                 renormalize: bool = True) -> dict:
    """{total, terms, shift}: terms map derivative index to tau^e ||D^beta u||^2 in the weight."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    member = _prepare(u, w, op, renormalize)
    sums = _sums(member, np.array([float(tau)]))[0]
    terms = {k: float(tau ** e * s) for k, e, s in zip(member.keys, member.exponents, sums[:-1])}
    return {"total": float(sum(terms.values())), "terms": terms, "shift": member.shift}


def carleman_rhs(u: GridFunction, tau: float, w: CarlemanWeight, op: OperatorSymbol,
                 renormalize: bool = True) -> float:
    """||P(D_t, D_x) u||^2 in the (renormalised) weight; the constant C is stripped."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    member = _prepare(u, w, op, renormalize)
    return float(_sums(member, np.array([float(tau)]))[0, -1])


def member_ratios(u: GridFunction, taus: Sequence[float], w: CarlemanWeight, op: OperatorSymbol,
                  renormalize: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[MultiIndex]]:
    """(ratio, rhs, term table) over taus for one function; ratio is nan where rhs is degenerate."""
    taus = np.asarray(taus, dtype=float)
    member = _prepare(u, w, op, renormalize)
    sums = _sums(member, taus)
    terms = taus[:, None] ** member.exponents[None, :] * sums[:, :-1]
    rhs = sums[:, -1]
    ok = rhs > DENOM_FLOOR
    ratio = np.where(ok, terms.sum(axis=1) / np.where(ok, rhs, 1.0), np.nan)
    return ratio, rhs, terms, member.keys


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def tau_grid(tau_min: float, tau_max: float, points: int) -> np.ndarray:
    if not 0 < tau_min < tau_max:
        raise ValueError(f"tau range must satisfy 0 < tau_min < tau_max, got [{tau_min}, {tau_max}]")
    if points < 1:
        raise ValueError("tau needs at least one point")
    return np.geomspace(tau_min, tau_max, points)


def _box_samples(spec: TestFunctionSpec) -> tuple[np.ndarray, np.ndarray]:
    t = np.linspace(-spec.delta_prime, spec.delta_prime, 201)
    return np.meshgrid(t, t, indexing="ij")


def max_tau(w: CarlemanWeight, spec: TestFunctionSpec, bound: float = TAU_PHI_BOUND) -> float:
    """Largest tau with tau * max|2 phi| <= bound on the support box."""
    T, X = _box_samples(spec)
    return bound / float(np.max(np.abs(2 * w(T, X))))


def resolved_tau(w: CarlemanWeight, spec: TestFunctionSpec, grid: Grid) -> float:
    """Largest tau for which e^{2 tau phi} changes by at most a factor e per grid cell.

    Past this the weighted sums are carried by a layer thinner than one cell
    at the support edge, where only round-off of u survives, and the ratios
    grow like a power of tau for purely numerical reasons.
    """
    T, X = _box_samples(spec)
    gt, gx = w.gradient(T, X)
    h = grid.spacing
    per_cell = max(h[0] * float(np.max(np.abs(gt))), h[-1] * float(np.max(np.abs(gx))))
    return 1.0 / (2.0 * per_cell)


def default_taus(w: CarlemanWeight, spec: TestFunctionSpec, grid: Grid | None = None,
                 points: int = 20, tau_min: float = 2.0) -> np.ndarray:
    """Log-spaced taus from tau_min up to the smaller of the overflow and resolution bounds."""
    grid = grid or spec.default_grid()
    return tau_grid(tau_min, min(max_tau(w, spec), resolved_tau(w, spec, grid)), points)


def _key(beta: MultiIndex) -> str:
    return ",".join(str(b) for b in beta)


@dataclass
class SweepReport:
    kind: str
    m: int
    n: int
    N: float
    weight: dict
    spec: dict
    grid: dict
    taus: list[float]
    C_star: list[float]
    argmax_member: list[int]
    dominant_alpha: list[str]
    breakdown: list[dict[str, float]]
    rhs_min: list[float]
    valid_members: list[int]
    family_size: int
    tau0_est: float | None
    C_cap: float
    weight_shift: float
    ratios: list[list[float]] = field(default_factory=list)

    @property
    def finite(self) -> bool:
        return bool(self.C_star) and all(math.isfinite(c) for c in self.C_star)

    @property
    def growth(self) -> float:
        """max C* over the upper half of the tau interval divided by max over the lower half.

        The interval is split at its midpoint value (tau_min + tau_max)/2.
        """
        taus = np.asarray(self.taus)
        c = np.asarray(self.C_star)
        upper = taus > 0.5 * (taus[0] + taus[-1])
        if not upper.any() or upper.all():
            return 1.0
        return float(c[upper].max() / c[~upper].max())

    @property
    def growth_log_halves(self) -> float:
        """Same ratio with the samples split by index, i.e. at the geometric midpoint."""
        half = len(self.C_star) // 2
        if half == 0:
            return 1.0
        return max(self.C_star[half:]) / max(self.C_star[:half])

    @property
    def bounded(self) -> bool:
        return self.finite and self.growth <= 2.0

    @property
    def passed(self) -> bool:
        return self.bounded

    def to_json(self) -> dict:
        out = asdict(self)
        finite = self.finite
        out.update(finite=finite, growth=self.growth if finite else None,
                   growth_log_halves=self.growth_log_halves if finite else None,
                   bounded=self.bounded, passed=self.passed)
        out["ratios"] = [[x if math.isfinite(x) else None for x in row] for row in self.ratios]
        return out

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["tau", "C_star", "dominant_alpha", "rhs_min"])
            for row in zip(self.taus, self.C_star, self.dominant_alpha, self.rhs_min):
                writer.writerow([repr(float(row[0])), repr(float(row[1])), row[2], repr(float(row[3]))])


def sweep(op: OperatorSymbol, w: CarlemanWeight, spec: TestFunctionSpec, taus: Sequence[float],
          *, count: int = 16, grid: Grid | None = None, family: Sequence[GridFunction] | None = None,
          cap: float | None = None, workers: int = 1) -> SweepReport:
    """Empirical constants C*(tau) = max over the family of LHS/RHS.

    tau0_est is the first tau from which C* stays at or below the cap
    (default ten times the median C* of the sweep).
    """
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or taus.size == 0 or np.any(taus <= 0) or np.any(np.diff(taus) <= 0):
        raise ValueError("tau grid must be positive and strictly increasing")
    if op.n != spec.n:
        raise ValueError("operator and test-function spec disagree on n")
    if op.kind == "schrodinger" and not spec.delta_prime < 0.5:
        raise ValueError("the Schrodinger estimate needs delta_prime < 1/2")
    if taus[-1] > max_tau(w, spec) * (1 + 1e-12):
        raise ValueError(f"tau_max {taus[-1]:g} exceeds the overflow bound {max_tau(w, spec):g}")
    if family is None:
        family = generate_family(spec, grid or spec.default_grid(), count)
    if not family:
        raise ValueError("empty test family")

    def run(u):
        return member_ratios(u, taus, w, op)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, family))
    else:
        results = [run(u) for u in family]
    keys = results[0][3]
    ratios = np.array([r[0] for r in results])  # (members, S)
    rhs = np.array([r[1] for r in results])
    valid = ~np.isnan(ratios)
    keep = valid.any(axis=0)  # tau where at least one member is nondegenerate
    C_star, argmax, dominant, breakdown, rhs_min, counts = [], [], [], [], [], []
    for s in np.flatnonzero(keep):
        col = np.where(valid[:, s], ratios[:, s], -np.inf)
        j = int(np.argmax(col))
        contrib = results[j][2][s] / rhs[j, s]
        C_star.append(float(col[j]))
        argmax.append(j)
        dominant.append(_key(keys[int(np.argmax(contrib))]))
        breakdown.append({_key(k): float(c) for k, c in zip(keys, contrib)})
        rhs_min.append(float(np.min(rhs[valid[:, s], s])))
        counts.append(int(valid[:, s].sum()))
    kept = [float(t) for t in taus[keep]]
    C_cap = float(cap) if cap is not None else 10.0 * float(np.median(C_star))
    tau0 = None
    for i in range(len(C_star)):
        if all(c <= C_cap for c in C_star[i:]):
            tau0 = kept[i]
            break
    mask = family[0].support_mask
    phi = w.on_grid(family[0].grid)
    shift = float(np.max(phi[mask] if mask is not None else phi))
    return SweepReport(
        kind=op.kind, m=op.m, n=op.n, N=w.N, weight=w.to_json(), spec=spec.to_json(),
        grid=family[0].grid.to_json(), taus=kept, C_star=C_star, argmax_member=argmax,
        dominant_alpha=dominant, breakdown=breakdown, rhs_min=rhs_min, valid_members=counts,
        family_size=len(family), tau0_est=tau0, C_cap=C_cap, weight_shift=shift,
        ratios=[[float(x) for x in ratios[:, s]] for s in np.flatnonzero(keep)],
    )


__all__ = [
    "CarlemanWeight", "TestFunctionSpec", "SweepReport", "make_weight", "preset_N", "generate_family",
    "lhs_exponents", "carleman_lhs", "carleman_rhs", "member_ratios", "sweep", "tau_grid", "max_tau",
    "resolved_tau", "default_taus",
]
