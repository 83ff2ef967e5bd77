# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: pairwise squared distances and label accumulation.

Floating-point accumulation order matches trendscan.kernels exactly
(feature-major for distances, point-major for sums), so the compiled and
numpy backends produce bit-identical results.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def pairwise_sqdist(double[:, ::1] x, double[:, ::1] c):
    """Squared Euclidean distance matrix between rows of x and rows of c."""
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], k = c.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, k))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, m
    cdef double diff
    with nogil:
        for i in range(n):
            for m in range(k):
                for j in range(d):
                    diff = x[i, j] - c[m, j]
                    o[i, m] = o[i, m] + diff * diff
    return out


def assign(double[:, ::1] x, double[:, ::1] c):
    """Nearest-centroid labels (ties to lowest index) and min squared distances."""
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], k = c.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mind = np.empty(n)
    cdef long long[::1] lab = labels
    cdef double[::1] md = mind
    cdef Py_ssize_t i, j, m
    cdef double diff, s, best
    cdef Py_ssize_t bi
    with nogil:
        for i in range(n):
            best = 0.0
            bi = 0
            for m in range(k):
                s = 0.0
                for j in range(d):
                    diff = x[i, j] - c[m, j]
                    s = s + diff * diff
                if m == 0 or s < best:
                    best = s
                    bi = m
            lab[i] = bi
            md[i] = best
    return labels, mind


def accumulate(double[:, ::1] x, long long[::1] labels, Py_ssize_t k):
    """Per-label vector sums and counts, accumulated in point order."""
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] sums = np.zeros((k, d))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(k, dtype=np.int64)
    cdef double[:, ::1] sm = sums
    cdef long long[::1] ct = counts
    cdef Py_ssize_t i, j
    cdef long long c
    with nogil:
        for i in range(n):
            c = labels[i]
            for j in range(d):
                sm[c, j] = sm[c, j] + x[i, j]
            ct[c] = ct[c] + 1
    return sums, counts
