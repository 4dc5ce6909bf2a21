# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled DTW kernels; same contract as ``_dtw_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef double _dtw(const double[::1] x, const double[::1] y, Py_ssize_t radius) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0]
    cdef Py_ssize_t i, j, lo, hi, r
    cdef double d, best, res
    cdef double *prev
    cdef double *cur
    cdef double *tmp
    if radius < 0:
        r = n if n > m else m
    else:
        r = radius
        if n - m > r:
            r = n - m
        if m - n > r:
            r = m - n
    prev = <double *> malloc((m + 1) * sizeof(double))
    cur = <double *> malloc((m + 1) * sizeof(double))
    for j in range(m + 1):
        prev[j] = INFINITY
    prev[0] = 0.0
    for i in range(1, n + 1):
        for j in range(m + 1):
            cur[j] = INFINITY
        lo = i - r
        if lo < 1:
            lo = 1
        hi = i + r
        if hi > m:
            hi = m
        for j in range(lo, hi + 1):
            d = x[i - 1] - y[j - 1]
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = d * d + best
        tmp = prev
        prev = cur
        cur = tmp
    res = sqrt(prev[m])
    free(prev)
    free(cur)
    return res


def dtw_distance(x, y, Py_ssize_t radius=-1):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    if xv.shape[0] == 0 or yv.shape[0] == 0:
        raise ValueError("DTW needs non-empty sequences")
    return _dtw(xv, yv, radius)


def pairwise_dtw(series, Py_ssize_t radius=-1):
    cdef const double[:, ::1] s = np.ascontiguousarray(series, dtype=np.float64)
    cdef Py_ssize_t k = s.shape[0], a, b
    if s.shape[1] == 0:
        raise ValueError("DTW needs non-empty sequences")
    out = np.zeros((k, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for a in range(k):
            for b in range(a + 1, k):
                o[a, b] = _dtw(s[a], s[b], radius)
                o[b, a] = o[a, b]
    return out
