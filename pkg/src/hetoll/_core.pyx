# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Same signatures and results as ``hetoll._core_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()

cdef enum:
    MAXN = 64

cdef enum:
    ST_CONVERGED = 0
    ST_MAX_ITERS = 1
    ST_STALLED = 2

CONVERGED = ST_CONVERGED
MAX_ITERS = ST_MAX_ITERS
STALLED = ST_STALLED


cdef void _proj(double* v, Py_ssize_t n, Py_ssize_t stride, double total, double* out) noexcept nogil:
    # sort-based simplex projection of a strided column; insertion sort, n is small
    cdef double u[MAXN]
    cdef Py_ssize_t i, k
    cdef double x, css, theta, t
    for i in range(n):
        x = v[i * stride]
        k = i
        while k > 0 and u[k - 1] < x:
            u[k] = u[k - 1]
            k -= 1
        u[k] = x
    css = 0.0
    theta = 0.0
    for i in range(n):
        css += u[i]
        t = (css - total) / (i + 1)
        if u[i] - t > 0:
            theta = t
    for i in range(n):
        x = v[i * stride] - theta
        out[i * stride] = x if x > 0 else 0.0


cdef double _cost(const double[:, ::1] a, const double[::1] b, double[:, ::1] f) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], i, j
    cdef double total = 0.0, road, lat
    for i in range(n):
        road = 0.0
        lat = b[i]
        for j in range(m):
            road += f[i, j]
            lat += a[i, j] * f[i, j]
        total += road * lat
    return total


cdef void _grad(const double[:, ::1] a, const double[::1] b, double[:, ::1] f, double[:, ::1] g) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], i, j
    cdef double road, lat
    for i in range(n):
        road = 0.0
        lat = b[i]
        for j in range(m):
            road += f[i, j]
            lat += a[i, j] * f[i, j]
        for j in range(m):
            g[i, j] = lat + a[i, j] * road


def project_simplex(v, double total):
    cdef cnp.ndarray[double, ndim=1, mode="c"] src = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = src.shape[0]
    if n > MAXN:
        raise ValueError(f"vector length {n} exceeds compiled limit {MAXN}")
    out = np.empty(n)
    cdef double[::1] o = out
    _proj(&src[0], n, 1, total, &o[0])
    return out


def pgd(a_in, b_in, demand_in, f0, Py_ssize_t max_iters, double tol,
        double armijo_c=1e-4, double shrink=0.5, Py_ssize_t window=500):
    cdef const double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef const double[::1] demand = np.ascontiguousarray(demand_in, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], i, j
    if n > MAXN:
        raise ValueError(f"road count {n} exceeds compiled limit {MAXN}")
    f_arr = np.array(f0, dtype=np.float64, order="C")
    cdef double[:, ::1] f = f_arr
    cdef double[:, ::1] g = np.empty((n, m))
    cdef double[:, ::1] w = np.empty((n, m))
    cdef double[:, ::1] trial = np.empty((n, m))
    cdef double t = 1.0, cost, tc, dot, resid = INFINITY, diff, best = INFINITY
    cdef Py_ssize_t it = 0, best_it = 0
    cdef int status = ST_MAX_ITERS
    with nogil:
        cost = _cost(a, b, f)
        while True:
            _grad(a, b, f, g)
            for i in range(n):
                for j in range(m):
                    w[i, j] = f[i, j] - g[i, j]
            for j in range(m):
                _proj(&w[0, j], n, m, demand[j], &trial[0, j])
            resid = 0.0
            for i in range(n):
                for j in range(m):
                    diff = f[i, j] - trial[i, j]
                    resid += diff * diff
            resid = sqrt(resid)
            if resid <= tol:
                status = ST_CONVERGED
                break
            if it >= max_iters:
                break
            if resid < 0.99 * best:
                best = resid
                best_it = it
            elif it - best_it >= window:
                status = ST_STALLED
                break
            while True:
                for i in range(n):
                    for j in range(m):
                        w[i, j] = f[i, j] - t * g[i, j]
                for j in range(m):
                    _proj(&w[0, j], n, m, demand[j], &trial[0, j])
                dot = 0.0
                for i in range(n):
                    for j in range(m):
                        dot += g[i, j] * (trial[i, j] - f[i, j])
                tc = _cost(a, b, trial)
                if tc <= cost + armijo_c * dot:
                    break
                t *= shrink
                if t < 1e-30:
                    status = ST_STALLED
                    break
            if status == ST_STALLED:
                break
            f[...] = trial
            cost = tc
            t = t / shrink
            if t > 1e6:
                t = 1e6
            it += 1
    return f_arr, it, resid, status


cdef void _water_fill(double* base, const double* slope, Py_ssize_t sstride, Py_ssize_t n,
                      double total, double* out) noexcept nogil:
    cdef Py_ssize_t order[MAXN]
    cdef Py_ssize_t i, k, idx
    cdef double s1 = 0.0, s2 = 0.0, level, x
    # stable insertion sort of indices by base
    for i in range(n):
        k = i
        while k > 0 and base[order[k - 1]] > base[i]:
            order[k] = order[k - 1]
            k -= 1
        order[k] = i
    level = base[order[0]]
    for k in range(n):
        idx = order[k]
        s1 += 1.0 / slope[idx * sstride]
        s2 += base[idx] / slope[idx * sstride]
        level = (total + s2) / s1
        if k == n - 1 or level <= base[order[k + 1]]:
            break
    for i in range(n):
        x = level - base[i]
        out[i] = x / slope[i * sstride] if x > 0 else 0.0


def water_fill(base_in, slope_in, double total):
    cdef double[::1] base = np.array(base_in, dtype=np.float64)
    cdef const double[::1] slope = np.ascontiguousarray(slope_in, dtype=np.float64)
    cdef Py_ssize_t n = base.shape[0]
    if n > MAXN:
        raise ValueError(f"road count {n} exceeds compiled limit {MAXN}")
    out = np.empty(n)
    cdef double[::1] o = out
    _water_fill(&base[0], &slope[0], 1, n, total, &o[0])
    return out


cdef double _violation(const double[:, ::1] a, const double[::1] b, const double[:, ::1] tolls,
                       double[:, ::1] f, double threshold, double* lat) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], i, j
    cdef double worst = 0.0, lo, c
    cdef bint any_used = False
    for i in range(n):
        lat[i] = b[i]
        for j in range(m):
            lat[i] += a[i, j] * f[i, j]
    for j in range(m):
        lo = INFINITY
        for i in range(n):
            c = lat[i] + tolls[i, j]
            if c < lo:
                lo = c
        for i in range(n):
            if f[i, j] > threshold:
                c = lat[i] + tolls[i, j] - lo
                if not any_used or c > worst:
                    worst = c
                any_used = True
    return worst


def wardrop_violation(a_in, b_in, tolls_in, f_in, double threshold):
    cdef const double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef const double[:, ::1] tolls = np.ascontiguousarray(tolls_in, dtype=np.float64)
    cdef double[:, ::1] f = np.array(f_in, dtype=np.float64, order="C")
    cdef double lat[MAXN]
    if a.shape[0] > MAXN:
        raise ValueError(f"road count {a.shape[0]} exceeds compiled limit {MAXN}")
    return _violation(a, b, tolls, f, threshold, lat)


def br_dynamics(a_in, b_in, demand_in, tolls_in, f0, double damping, double eps,
                Py_ssize_t max_rounds, double threshold, Py_ssize_t window):
    cdef const double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef const double[::1] demand = np.ascontiguousarray(demand_in, dtype=np.float64)
    cdef const double[:, ::1] tolls = np.ascontiguousarray(tolls_in, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], i, j, k
    if n > MAXN:
        raise ValueError(f"road count {n} exceeds compiled limit {MAXN}")
    f_arr = np.array(f0, dtype=np.float64, order="C")
    cdef double[:, ::1] f = f_arr
    cdef double lat[MAXN]
    cdef double base[MAXN]
    cdef double br[MAXN]
    cdef double viol = INFINITY, best = INFINITY, mark = INFINITY
    cdef Py_ssize_t rounds = 0, mark_round = 0
    cdef int status
    with nogil:
        while True:
            viol = _violation(a, b, tolls, f, threshold, lat)
            if viol <= eps:
                status = ST_CONVERGED
                break
            if viol < best:
                best = viol
            if best < 0.99 * mark:
                mark = best
                mark_round = rounds
            elif rounds - mark_round >= window:
                status = ST_STALLED
                break
            if rounds >= max_rounds:
                status = ST_MAX_ITERS
                break
            for j in range(m):
                for i in range(n):
                    lat[i] = b[i]
                for i in range(n):
                    for k in range(m):
                        if k != j:
                            lat[i] += a[i, k] * f[i, k]
                    base[i] = lat[i] + tolls[i, j]
                _water_fill(base, &a[0, j], m, n, demand[j], br)
                for i in range(n):
                    f[i, j] = (1.0 - damping) * f[i, j] + damping * br[i]
            rounds += 1
    return f_arr, rounds, viol, status


def grid_search(a_in, b_in, splits):
    cdef const double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], i, j, k
    if n > MAXN:
        raise ValueError(f"road count {n} exceeds compiled limit {MAXN}")
    counts_arr = np.array([s.shape[0] for s in splits], dtype=np.intp)
    offsets_arr = np.zeros(m, dtype=np.intp)
    offsets_arr[1:] = np.cumsum(counts_arr[:m - 1])
    flat_arr = np.ascontiguousarray(np.vstack(splits), dtype=np.float64)
    cdef const double[:, ::1] flat = flat_arr
    cdef const Py_ssize_t[::1] counts = counts_arr
    cdef const Py_ssize_t[::1] offsets = offsets_arr
    # road[j] / weighted[j]: partial sums over types < j
    cdef double[:, ::1] road = np.zeros((m + 1, n))
    cdef double[:, ::1] weighted = np.zeros((m + 1, n))
    cdef Py_ssize_t[::1] idx = np.zeros(m, dtype=np.intp)
    best_idx_arr = np.zeros(m, dtype=np.intp)
    cdef Py_ssize_t[::1] best_idx = best_idx_arr
    cdef double best = INFINITY, c, r, w
    cdef Py_ssize_t last = m - 1, row
    with nogil:
        for j in range(last):
            row = offsets[j]
            for i in range(n):
                road[j + 1, i] = road[j, i] + flat[row, i]
                weighted[j + 1, i] = weighted[j, i] + a[i, j] * flat[row, i]
        while True:
            for k in range(counts[last]):
                row = offsets[last] + k
                c = 0.0
                for i in range(n):
                    r = road[last, i] + flat[row, i]
                    w = weighted[last, i] + a[i, last] * flat[row, i]
                    c += r * (b[i] + w)
                if c < best:
                    best = c
                    for j in range(last):
                        best_idx[j] = idx[j]
                    best_idx[last] = k
            # odometer over the prefix types
            j = last - 1
            while j >= 0:
                idx[j] += 1
                if idx[j] < counts[j]:
                    break
                idx[j] = 0
                j -= 1
            if j < 0:
                break
            for k in range(j, last):
                row = offsets[k] + idx[k]
                for i in range(n):
                    road[k + 1, i] = road[k, i] + flat[row, i]
                    weighted[k + 1, i] = weighted[k, i] + a[i, k] * flat[row, i]
    return tuple(int(x) for x in best_idx_arr), best
