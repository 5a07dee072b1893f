"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``CARLEMANLAB_DISABLE_NUMBA`` is unset or ``0``.  Both paths are
always importable as ``<name>_numpy`` / ``<name>_numba`` so tests and the
benchmark can compare them directly.

Every numba kernel parallelises only over an *output* index and sums each
output serially, so results do not depend on the thread count.
"""
import os

import numpy as np

# prefer OpenMP: safe under concurrent calls from worker threads
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

# reassociation lets LLVM vectorise the reductions; the summation order is
# still fixed at compile time, so repeated runs agree bit for bit
_REASSOC = {"reassoc", "contract"}

USE_NUMBA = HAVE_NUMBA and os.environ.get("CARLEMANLAB_DISABLE_NUMBA", "0") in ("", "0")


# ---------------------------------------------------------------------------
# polynomial evaluation at a batch of points
# ---------------------------------------------------------------------------

def poly_eval_batch_numpy(exps, coeffs, points):
    """Evaluate sum_k coeffs[k] * prod_j points[:, j]**exps[k, j].

    exps: (T, d) int64, coeffs: (T,) complex128, points: (M, d) complex128.
    """
    points = np.asarray(points, dtype=np.complex128)
    out = np.zeros(points.shape[0], dtype=np.complex128)
    if exps.shape[0] == 0:
        return out
    dmax = int(exps.max()) if exps.size else 0
    # power table: (d, dmax+1, M)
    powers = np.ones((points.shape[1], dmax + 1, points.shape[0]), dtype=np.complex128)
    for p in range(1, dmax + 1):
        powers[:, p, :] = powers[:, p - 1, :] * points.T
    for k in range(exps.shape[0]):
        term = np.full(points.shape[0], coeffs[k], dtype=np.complex128)
        for j in range(exps.shape[1]):
            if exps[k, j]:
                term *= powers[j, exps[k, j], :]
        out += term
    return out


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _poly_eval_batch_kernel(exps, coeffs, points, out):
        M, d = points.shape
        T = exps.shape[0]
        dmax = 0
        for k in range(T):
            for j in range(d):
                dmax = max(dmax, exps[k, j])
        for i in prange(M):
            powers = np.empty((d, dmax + 1), dtype=np.complex128)
            for j in range(d):
                powers[j, 0] = 1.0
                for p in range(1, dmax + 1):
                    powers[j, p] = powers[j, p - 1] * points[i, j]
            acc = 0.0 + 0.0j
            for k in range(T):
                term = coeffs[k]
                for j in range(d):
                    term *= powers[j, exps[k, j]]
                acc += term
            out[i] = acc

    def poly_eval_batch_numba(exps, coeffs, points):
        points = np.ascontiguousarray(points, dtype=np.complex128)
        out = np.zeros(points.shape[0], dtype=np.complex128)
        _poly_eval_batch_kernel(
            np.ascontiguousarray(exps, dtype=np.int64),
            np.ascontiguousarray(coeffs, dtype=np.complex128),
            points,
            out,
        )
        return out

else:  # pragma: no cover
    poly_eval_batch_numba = poly_eval_batch_numpy


# ---------------------------------------------------------------------------
# weighted quadrature sums  sum_i exp(w_i) * g_i
# ---------------------------------------------------------------------------

def weighted_sum_numpy(w, g):
    """sum(exp(w) * g) for flat float arrays of equal length."""
    return float(np.sum(np.exp(w) * g))


def weighted_sums_multi_numpy(phi, g_stack, scales):
    """out[s, k] = sum_i exp(scales[s] * phi[i]) * g_stack[k, i]."""
    out = np.empty((scales.shape[0], g_stack.shape[0]))
    for s in range(scales.shape[0]):
        e = np.exp(scales[s] * phi)
        out[s] = g_stack @ e
    return out


if HAVE_NUMBA:

    @njit(cache=True, fastmath=_REASSOC)
    def _weighted_sum_kernel(w, g):
        acc = 0.0
        for i in range(w.shape[0]):
            acc += np.exp(w[i]) * g[i]
        return acc

    @njit(parallel=True, cache=True, fastmath=_REASSOC)
    def _weighted_sums_multi_kernel(phi, g_stack, scales, out):
        K, M = g_stack.shape
        for s in prange(scales.shape[0]):
            e = np.exp(scales[s] * phi)
            for k in range(K):
                acc = 0.0
                for i in range(M):
                    acc += e[i] * g_stack[k, i]
                out[s, k] = acc

    def weighted_sum_numba(w, g):
        return float(_weighted_sum_kernel(
            np.ascontiguousarray(w, dtype=np.float64),
            np.ascontiguousarray(g, dtype=np.float64),
        ))

    def weighted_sums_multi_numba(phi, g_stack, scales):
        scales = np.ascontiguousarray(scales, dtype=np.float64)
        g_stack = np.ascontiguousarray(g_stack, dtype=np.float64)
        out = np.empty((scales.shape[0], g_stack.shape[0]))
        _weighted_sums_multi_kernel(
            np.ascontiguousarray(phi, dtype=np.float64), g_stack, scales, out
        )
        return out

else:  # pragma: no cover
    weighted_sum_numba = weighted_sum_numpy
    weighted_sums_multi_numba = weighted_sums_multi_numpy


# ---------------------------------------------------------------------------
# homogeneous-form ratio on sphere samples (first term of the symbol form)
# ---------------------------------------------------------------------------

def eta_power_numpy(eta, m):
    """|eta|**(2m-1) * eta, elementwise."""
    return np.abs(eta) ** (2 * m - 1) * eta


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _eta_power_kernel(eta, m, out):
        for i in prange(eta.shape[0]):
            a = abs(eta[i])
            p = eta[i]
            for _ in range(2 * m - 1):
                p *= a
            out[i] = p

    def eta_power_numba(eta, m):
        eta = np.ascontiguousarray(eta, dtype=np.float64)
        out = np.empty_like(eta)
        _eta_power_kernel(eta, int(m), out)
        return out

else:  # pragma: no cover
    eta_power_numba = eta_power_numpy


def _pick(name):
    return globals()[name + ("_numba" if USE_NUMBA else "_numpy")]


poly_eval_batch = _pick("poly_eval_batch")
weighted_sum = _pick("weighted_sum")
weighted_sums_multi = _pick("weighted_sums_multi")
eta_power = _pick("eta_power")

backend = "numba" if USE_NUMBA else "numpy"
