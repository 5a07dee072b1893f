"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Both variants are imported directly, so the CARLEMANLAB_DISABLE_NUMBA flag
does not matter here.  Each kernel is run once untimed (JIT warm-up), then
the best of ``--repeat`` runs is reported together with the largest
relative difference between the two results.
"""
import argparse
import json
import time

import numpy as np

from carlemanlab import _accel


def best_of(fn, repeat):
    fn()  # warm-up, includes compilation for the numba path
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    # polynomial of degree <= 8 in 3 variables on 200k complex points
    exps = np.array([(a, b, c) for a in range(9) for b in range(9 - a) for c in range(9 - a - b)], dtype=np.int64)
    coeffs = rng.normal(size=len(exps)) + 1j * rng.normal(size=len(exps))
    points = rng.normal(size=(200_000, 3)) + 1j * rng.normal(size=(200_000, 3))
    yield "poly_eval_batch", (exps, coeffs, points)

    # one weighted quadrature over a 256^2 grid
    w = -rng.uniform(0, 50, 256 * 256)
    g = rng.uniform(0, 1, 256 * 256)
    yield "weighted_sum", (w, g)

    # tau-sweep sums: 20 scales x 8 integrands over a masked 96^3 grid
    phi = -rng.uniform(0, 0.5, 300_000)
    stack = rng.uniform(0, 1, (8, 300_000))
    scales = np.geomspace(4, 400, 20)
    yield "weighted_sums_multi", (phi, stack, scales)

    eta = rng.normal(size=1_000_000)
    yield "eta_power", (eta, 3)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", help="also write the table as JSON")
    args = parser.parse_args()

    if not _accel.HAVE_NUMBA:
        print("numba is not importable; only the numpy path exists")
    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max rel diff':>15}")
    for name, inputs in cases(rng):
        f_np = getattr(_accel, name + "_numpy")
        f_nb = getattr(_accel, name + "_numba")
        t_np = best_of(lambda: f_np(*inputs), args.repeat)
        t_nb = best_of(lambda: f_nb(*inputs), args.repeat)
        a = np.asarray(f_np(*inputs))
        b = np.asarray(f_nb(*inputs))
        diff = float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(a))), 1e-300))
        rows.append({"kernel": name, "numpy": t_np, "numba": t_nb, "speedup": t_np / t_nb, "max_rel_diff": diff})
        print(f"{name:<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.2f}{diff:>15.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
