"""Hot numeric kernels, compiled with numba when available.

Set ``VTDECODE_NO_NUMBA=1`` to force the pure-numpy implementations. The two
paths accumulate in the same order, so outputs agree bit for bit (see
``benchmarks/bench_kernels.py`` for a speed comparison).
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "temporal_correlate",
    "group_max",
    "pairwise_sq_dists",
    "jacobi_eigvals",
]

_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 200


def _correlate_rows_loops(values, taps):
    rows, n = values.shape
    tau = taps.shape[0]
    out = np.zeros((rows, n))
    for v in range(rows):
        for t in range(n):
            # columns past the end contribute zero
            hi = tau if tau <= n - t else n - t
            acc = 0.0
            for s in range(hi):
                acc += taps[s] * values[v, t + s]
            out[v, t] = acc
    return out


def _correlate_rows_numpy(values, taps):
    rows, n = values.shape
    tau = taps.shape[0]
    padded = np.zeros((rows, n + tau - 1))
    padded[:, :n] = values
    out = np.zeros((rows, n))
    # accumulate lag by lag so rounding matches the loop version exactly
    for s in range(tau):
        out += taps[s] * padded[:, s:s + n]
    return out


def _group_max_loops(values, delta):
    rows, n = values.shape
    groups = rows // delta
    out = np.empty((groups, n))
    for g in range(groups):
        for t in range(n):
            best = values[g * delta, t]
            for r in range(1, delta):
                cand = values[g * delta + r, t]
                if cand > best:
                    best = cand
            out[g, t] = best
    return out


def _group_max_numpy(values, delta):
    rows, n = values.shape
    return values.reshape(rows // delta, delta, n).max(axis=1)


def _pairwise_sq_dists_loops(queries, refs):
    nq = queries.shape[0]
    nr = refs.shape[0]
    dim = queries.shape[1]
    out = np.empty((nq, nr))
    for i in range(nq):
        for j in range(nr):
            acc = 0.0
            for c in range(dim):
                diff = queries[i, c] - refs[j, c]
                acc += diff * diff
            out[i, j] = acc
    return out


def _pairwise_sq_dists_numpy(queries, refs):
    out = np.empty((queries.shape[0], refs.shape[0]))
    for i in range(queries.shape[0]):
        diff = refs - queries[i]
        out[i] = np.einsum("ij,ij->i", diff, diff)
    return out


def _jacobi_eigvals_impl(sym):
    a = sym.copy()
    k = a.shape[0]
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = 0.0
        for p in range(k):
            for q in range(p + 1, k):
                off += a[p, q] * a[p, q]
        if np.sqrt(2.0 * off) < _JACOBI_TOL:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = 1.0 / (abs(theta) + np.sqrt(1.0 + theta * theta))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for i in range(k):
                    aip = a[i, p]
                    aiq = a[i, q]
                    a[i, p] = c * aip - s * aiq
                    a[i, q] = s * aip + c * aiq
                for i in range(k):
                    api = a[p, i]
                    aqi = a[q, i]
                    a[p, i] = c * api - s * aqi
                    a[q, i] = s * api + c * aqi
    out = np.empty(k)
    for i in range(k):
        out[i] = a[i, i]
    return out


def _numba_disabled() -> bool:
    flag = os.environ.get("VTDECODE_NO_NUMBA", "")
    return flag.strip().lower() in {"1", "true", "yes", "on"}


_use_numba = not _numba_disabled()
if _use_numba:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _use_numba = False

temporal_correlate_numpy = _correlate_rows_numpy
group_max_numpy = _group_max_numpy
pairwise_sq_dists_numpy = _pairwise_sq_dists_numpy
jacobi_eigvals_numpy = _jacobi_eigvals_impl

if _use_numba:
    _jit = numba.njit(cache=True)
    temporal_correlate_numba = _jit(_correlate_rows_loops)
    group_max_numba = _jit(_group_max_loops)
    pairwise_sq_dists_numba = _jit(_pairwise_sq_dists_loops)
    jacobi_eigvals_numba = _jit(_jacobi_eigvals_impl)

    temporal_correlate = temporal_correlate_numba
    group_max = group_max_numba
    pairwise_sq_dists = pairwise_sq_dists_numba
    jacobi_eigvals = jacobi_eigvals_numba
    BACKEND = "numba"
else:
    temporal_correlate_numba = None
    group_max_numba = None
    pairwise_sq_dists_numba = None
    jacobi_eigvals_numba = None

    temporal_correlate = temporal_correlate_numpy
    group_max = group_max_numpy
    pairwise_sq_dists = pairwise_sq_dists_numpy
    jacobi_eigvals = jacobi_eigvals_numpy
    BACKEND = "numpy"
