"""Command-line front end: one subcommand per verifier, JSON reports, exit 0 iff every check passes.

    carlemanlab treves-verify [--config c.json]
    carlemanlab lemma22 [--config c.json]
    carlemanlab lemma23 [--config c.json]
    carlemanlab factorization --m 2 --n 2
    carlemanlab ellipticity --m 1 --n 1 --samples 10000
    carlemanlab carleman-sweep --config c.json

Common flags: --out DIR, --seed K, --workers W.  Reports are written to
``DIR/<subcommand>.json`` and embed the fully resolved configuration.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, carleman, symbolcheck, treves
from .polycalc import OperatorSymbol


class ConfigError(ValueError):
    """Invalid configuration; the message names the violated bound."""


DEFAULTS: dict[str, dict] = {
    "treves-verify": {"dimensions": [1, 2], "max_degree": 4, "seeds": 20, "seed": 0,
                      "preset": None, "tolerance": None},
    "lemma22": {"dimensions": [1, 2], "max_degree": 3, "seeds": 2, "count": 8, "seed": 0},
    "lemma23": {"K": [0, 1, 2, 3, 4], "tau": [2.0, 10.0, 50.0], "delta": 0.5, "signs": [1, -1],
                "count": 8, "seed": 0, "refine": 2, "stability": 0.10},
    "factorization": {"m": [1, 2, 3], "n": [1, 2, 3], "tol": 1e-10},
    "ellipticity": {"m": [1], "n": [1], "samples": 10_000, "seed": 0, "trials": 100_000,
                    "refine_factor": 4, "refine_tolerance": 0.01},
    "carleman-sweep": {
        "operator": {"kind": "parabolic", "m": 1, "n": 1},
        "weight": {"kind": "standard", "N": 0.0, "c": 1.0},
        "spec": {"delta_prime": 0.2, "bumps": 3, "seed": 0, "count": 16, "wavenumber": 4.0},
        "tau": {"min": 2.0, "max": "auto", "points": 20},
        "grid": {"points": None},
        "cap": None,
    },
}

ZERO_WEIGHT_TOL = 1e-10
TREVES_TOL = 1e-7


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _clean(obj):
    """JSON-safe copy: tuples to lists, numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# subcommands: each takes a resolved config and returns (report, passed)
# ---------------------------------------------------------------------------

def run_treves(cfg: dict, workers: int) -> tuple[dict, bool]:
    dims = _as_list(cfg["dimensions"])
    _require(all(d in (1, 2) for d in dims), "dimensions must be 1 or 2")
    _require(0 <= cfg["max_degree"] <= 4, "max_degree must lie in [0, 4]")
    _require(cfg["seeds"] >= 1, "seeds must be >= 1")
    _require(cfg["preset"] in (None, "zero-weight"), "preset must be null or 'zero-weight'")
    zero = cfg["preset"] == "zero-weight"
    tol = cfg["tolerance"] if cfg["tolerance"] is not None else (ZERO_WEIGHT_TOL if zero else TREVES_TOL)
    cases = [(d, deg, cfg["seed"] + s) for d in dims for deg in range(cfg["max_degree"] + 1)
             for s in range(cfg["seeds"])]

    def one(case):
        d, deg, seed = case
        r = treves.verify_treves(*treves.random_treves_case(d, deg, seed, zero_weight=zero))
        return {"dimension": d, "degree": deg, "seed": seed, "lhs": r.lhs, "rhs": r.rhs,
                "relative_error": r.relative_error}

    rows = _map(one, cases, workers)
    worst = max(r["relative_error"] for r in rows)
    passed = worst <= tol
    return {"cases": rows, "relative_error": worst, "tolerance": tol, "pass": passed}, passed


def run_lemma22(cfg: dict, workers: int) -> tuple[dict, bool]:
    dims = _as_list(cfg["dimensions"])
    _require(all(d in (1, 2) for d in dims), "dimensions must be 1 or 2")
    _require(0 <= cfg["max_degree"] <= 4, "max_degree must lie in [0, 4]")
    _require(cfg["count"] >= 1, "count must be >= 1")
    cases = [(d, deg, cfg["seed"] + s) for d in dims for deg in range(cfg["max_degree"] + 1)
             for s in range(cfg["seeds"])]

    def one(case):
        d, deg, seed = case
        P, Q, family = treves.random_lemma22_case(d, deg, seed, cfg["count"])
        out = []
        for k in range(deg + 1):
            r = treves.estimate_lemma22(P, Q, k, family, seed)
            out.append({"dimension": d, "degree": deg, "seed": seed, "k": k, "C_est": r.C_est,
                        "pass": r.passed, "vacuous": r.vacuous})
        return out

    rows = [row for chunk in _map(one, cases, workers) for row in chunk]
    passed = all(r["pass"] for r in rows)
    return {"cases": rows, "pass": passed}, passed


def run_lemma23(cfg: dict, workers: int) -> tuple[dict, bool]:
    _require(0 < cfg["delta"] < 1, "delta must lie in (0, 1)")
    _require(all(k >= 0 for k in cfg["K"]), "K must be >= 0")
    _require(all(t > 0 for t in cfg["tau"]), "tau must be positive")
    _require(all(s in (1, -1) for s in cfg["signs"]), "signs must be +1 or -1")
    family = treves.lemma23_family(cfg["delta"], cfg["count"], cfg["seed"])
    cases = [(i, K, tau, sign) for i in range(len(family)) for K in cfg["K"]
             for tau in cfg["tau"] for sign in cfg["signs"]]

    def one(case):
        i, K, tau, sign = case
        r = treves.verify_lemma23(K, tau, cfg["delta"], sign, family[i], refine=cfg["refine"],
                                  stability=cfg["stability"])
        row = r.to_json()
        row["member"] = i
        return row

    rows = _map(one, cases, workers)
    passed = all(r["pass_23"] and r["pass_24"] for r in rows)
    return {"cases": rows, "pass": passed}, passed


def run_factorization(cfg: dict, workers: int) -> tuple[dict, bool]:
    ms, ns = _as_list(cfg["m"]), _as_list(cfg["n"])
    _require(all(m >= 1 for m in ms), "m must be >= 1")
    _require(all(n >= 1 for n in ns), "n must be >= 1")
    rows = [symbolcheck.verify_factorization(m, n, cfg["tol"]).to_json() for m in ms for n in ns]
    passed = all(r["pass"] for r in rows)
    return {"cases": rows, "pass": passed}, passed


def run_ellipticity(cfg: dict, workers: int) -> tuple[dict, bool]:
    ms, ns = _as_list(cfg["m"]), _as_list(cfg["n"])
    _require(all(m >= 1 for m in ms), "m must be >= 1")
    _require(all(n >= 1 for n in ns), "n must be >= 1")
    _require(cfg["samples"] >= 10_000, "samples must be >= 10000")
    _require(cfg["refine_factor"] >= 1, "refine_factor must be >= 1")

    def one(mn):
        m, n = mn
        num, den = symbolcheck.lhs_form_39(m, n), symbolcheck.rhs_form_39(m, n)
        base = symbolcheck.min_ratio_on_sphere(num, den, cfg["samples"], cfg["seed"])
        fine = symbolcheck.min_ratio_on_sphere(num, den, cfg["samples"] * cfg["refine_factor"], cfg["seed"])
        change = abs(fine.min_value - base.min_value) / base.min_value
        mc = symbolcheck.check_38_from_39(m, n, cfg["trials"], C=base.min_value, seed=cfg["seed"])
        rhs_only = symbolcheck.min_ratio_on_sphere(den, symbolcheck.norm_form(m, n), cfg["samples"],
                                                   cfg["seed"])
        row = {"m": m, "n": n, "sphere": base.to_json(), "refined_min_value": fine.min_value,
               "refinement_change": change, "rhs_only_min": rhs_only.min_value,
               "monte_carlo": mc.to_json()}
        ok = base.min_value > 0 and change <= cfg["refine_tolerance"] and mc.passed
        if (m, n) == (1, 1):
            row["rhs_only_closed_form"] = 0.5
            row["rhs_only_error"] = abs(rhs_only.min_value - 0.5)
            ok = ok and row["rhs_only_error"] <= 1e-6
        row["pass"] = ok
        return row

    rows = _map(one, [(m, n) for m in ms for n in ns], workers)
    passed = all(r["pass"] for r in rows)
    return {"cases": rows, "pass": passed}, passed


def resolve_sweep(cfg: dict) -> tuple[OperatorSymbol, carleman.CarlemanWeight, carleman.TestFunctionSpec,
                                      np.ndarray, object, dict]:
    """Validate a sweep config; returns the objects and the config with every 'auto' filled in."""
    op_cfg, w_cfg, s_cfg, t_cfg = cfg["operator"], cfg["weight"], cfg["spec"], cfg["tau"]
    _require(op_cfg["m"] >= 1, "operator.m must be >= 1")
    _require(op_cfg["n"] in (1, 2), "operator.n must be 1 or 2")
    _require(op_cfg["kind"] in ("parabolic", "schrodinger"), "operator.kind must be parabolic or schrodinger")
    dp = s_cfg["delta_prime"]
    _require(0 < dp < 1, "spec.delta_prime must lie in (0, 1)")
    if op_cfg["kind"] == "schrodinger":
        _require(dp < 0.5, "spec.delta_prime must be < 1/2 for the Schrodinger estimate")
    _require(s_cfg["count"] >= 1, "spec.count must be >= 1")
    N = w_cfg["N"]
    if N == "preset":
        N = carleman.preset_N(dp, dp)
    _require(isinstance(N, (int, float)) and N >= 0, "weight.N must be >= 0 or 'preset'")
    _require(w_cfg["kind"] in ("standard", "saddle"), "weight.kind must be standard or saddle")
    if w_cfg["kind"] == "saddle":
        _require(w_cfg.get("c") is not None and w_cfg["c"] > 0, "weight.c must be > 0")
    w = carleman.make_weight(w_cfg["kind"], float(N), w_cfg.get("c"))
    spec = carleman.TestFunctionSpec(dp, op_cfg["n"], s_cfg["bumps"], s_cfg["seed"],
                                     wavenumber=s_cfg["wavenumber"])
    points = cfg["grid"]["points"]
    try:
        grid = spec.default_grid(points)
    except ValueError as exc:
        raise ConfigError(f"grid.points: {exc}") from None
    tmax = t_cfg["max"]
    bound = carleman.max_tau(w, spec)
    if tmax == "auto":
        tmax = min(bound, carleman.resolved_tau(w, spec, grid))
    _require(isinstance(tmax, (int, float)), "tau.max must be a number or 'auto'")
    _require(0 < t_cfg["min"] < tmax, f"tau range must satisfy 0 < tau.min < tau.max, got [{t_cfg['min']}, {tmax}]")
    _require(tmax <= bound * (1 + 1e-12), f"tau.max {tmax:g} exceeds the overflow bound {bound:g}")
    _require(t_cfg["points"] >= 1, "tau.points must be >= 1")
    taus = carleman.tau_grid(t_cfg["min"], tmax, t_cfg["points"])
    resolved = copy.deepcopy(cfg)
    resolved["weight"]["N"] = float(N)
    resolved["tau"]["max"] = float(tmax)
    resolved["grid"]["points"] = grid.counts[0]
    return OperatorSymbol.make(op_cfg["kind"], op_cfg["m"], op_cfg["n"]), w, spec, taus, grid, resolved


def run_sweep(cfg: dict, workers: int, out: Path | None = None) -> tuple[dict, bool, dict]:
    op, w, spec, taus, grid, resolved = resolve_sweep(cfg)
    report = carleman.sweep(op, w, spec, taus, count=cfg["spec"]["count"], grid=grid,
                            cap=cfg["cap"], workers=workers)
    if out is not None:
        report.write_csv(out / "carleman-sweep.csv")
    return report.to_json(), report.passed, resolved


RUNNERS = {
    "treves-verify": run_treves,
    "lemma22": run_lemma22,
    "lemma23": run_lemma23,
    "factorization": run_factorization,
    "ellipticity": run_ellipticity,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config; keys override the defaults")
    common.add_argument("--out", type=Path, default=Path("reports"), help="report directory")
    common.add_argument("--seed", type=int, default=None, help="base seed (overrides the config)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker threads")

    parser = argparse.ArgumentParser(prog="carlemanlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("treves-verify", parents=[common], help="randomized check of the Treves identity")
    sub.add_parser("lemma22", parents=[common], help="weighted derivative comparison constants")
    sub.add_parser("lemma23", parents=[common], help="pointwise error bounds for conjugated powers")
    fac = sub.add_parser("factorization", parents=[common], help="symbolic division facts")
    fac.add_argument("--m", type=int, nargs="+")
    fac.add_argument("--n", type=int, nargs="+")
    ell = sub.add_parser("ellipticity", parents=[common], help="sphere minima of the symbol forms")
    ell.add_argument("--m", type=int, nargs="+")
    ell.add_argument("--n", type=int, nargs="+")
    ell.add_argument("--samples", type=int)
    ell.add_argument("--trials", type=int)
    sub.add_parser("carleman-sweep", parents=[common], help="tau-sweep of a Carleman estimate")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS[args.command])
    if args.config is not None:
        try:
            user = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        _require(isinstance(user, dict), "config must be a JSON object")
        unknown = set(user) - set(cfg)
        _require(not unknown, f"unknown config keys: {sorted(unknown)}")
        cfg = _merge(cfg, user)
    for key in ("m", "n", "samples", "trials"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if args.seed is not None:
        if args.command == "carleman-sweep":
            cfg["spec"]["seed"] = args.seed
        elif "seed" in cfg:
            cfg["seed"] = args.seed
    _require(args.workers >= 1, "workers must be >= 1")
    return cfg


def write_report(out: Path, command: str, config: dict, report: dict, passed: bool) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{command}.json"
    doc = {"command": command, "version": __version__, "config": config, "pass": passed, "report": report}
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
    return path


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "carleman-sweep":
            args.out.mkdir(parents=True, exist_ok=True)
            report, passed, cfg = run_sweep(cfg, args.workers, args.out)
        else:
            report, passed = RUNNERS[args.command](cfg, args.workers)
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        print(f"carlemanlab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    path = write_report(args.out, args.command, cfg, report, passed)
    print(f"{args.command}: {'PASS' if passed else 'FAIL'} -> {path}")
    return 0 if passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
