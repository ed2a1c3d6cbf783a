# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the temperature-sweep kernels.

Same signatures and packing convention as ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline double _row_max(const double[::1] row, Py_ssize_t c) noexcept nogil:
    cdef Py_ssize_t k
    cdef double m = -INFINITY
    for k in range(c):
        if row[k] > m:
            m = row[k]
    return m


cdef inline double _scaled_lse(const double[::1] row, Py_ssize_t c, double rmax, double t) noexcept nogil:
    # division by t > 0 is monotone under rounding, so max(row / t) == rmax / t
    cdef Py_ssize_t k
    cdef double m = rmax / t
    cdef double acc = 0.0
    for k in range(c):
        acc += exp(row[k] / t - m)
    return t * (m + log(acc))


def row_logsumexp(x):
    cdef const double[:, ::1] v = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _scaled_lse(v[i], v.shape[1], _row_max(v[i], v.shape[1]), 1.0)
    return out


def confidences(logits, counts, double T):
    cdef const double[:, :, ::1] l = np.ascontiguousarray(logits, dtype=np.float64)
    cdef const cnp.int64_t[::1] cnt = np.ascontiguousarray(counts, dtype=np.int64)
    cdef Py_ssize_t S = l.shape[0], N = l.shape[1], s, n
    out = np.empty((S, N), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for s in range(S):
            for n in range(N):
                o[s, n] = _scaled_lse(l[s, n], cnt[s], _row_max(l[s, n], cnt[s]), T)
    return out


def stage_winners(logits, counts, temps):
    cdef const double[:, :, ::1] l = np.ascontiguousarray(logits, dtype=np.float64)
    cdef const cnp.int64_t[::1] cnt = np.ascontiguousarray(counts, dtype=np.int64)
    cdef const double[::1] ts = np.ascontiguousarray(temps, dtype=np.float64)
    cdef Py_ssize_t S = l.shape[0], N = l.shape[1], NT = ts.shape[0]
    cdef Py_ssize_t s, n, j, best
    cdef double conf, best_conf
    out = np.empty((NT, N), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    rmax_arr = np.empty(S, dtype=np.float64)
    cdef double[::1] rmax = rmax_arr
    with nogil:
        for n in range(N):
            for s in range(S):
                rmax[s] = _row_max(l[s, n], cnt[s])
            for j in range(NT):
                best = 0
                best_conf = -INFINITY
                for s in range(S):
                    conf = _scaled_lse(l[s, n], cnt[s], rmax[s], ts[j])
                    if conf > best_conf:
                        best_conf = conf
                        best = s
                o[j, n] = best
    return out
