# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; must agree exactly with _kernels_py."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()

IMPLEMENTATION = "cython"


def cumulative_at(starts, ends, int64_t resolution, Py_ssize_t n):
    cdef int64_t[::1] s = np.ascontiguousarray(starts, dtype=np.int64)
    cdef int64_t[::1] e = np.ascontiguousarray(ends, dtype=np.int64)
    out_arr = np.zeros(n + 1, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    cdef Py_ssize_t count = s.shape[0]
    cdef Py_ssize_t i = 0, k
    cdef int64_t total = 0, t, partial
    for k in range(1, n + 1):
        t = k * resolution
        while i < count and e[i] <= t:
            total += e[i] - s[i]
            i += 1
        partial = 0
        if i < count and s[i] < t:
            partial = t - s[i]
        out[k] = total + partial
    return out_arr


def first_intersection(avail, int64_t resolution, int64_t budget, peer_budgets, peer_periods):
    cdef int64_t[::1] a = np.ascontiguousarray(avail, dtype=np.int64)
    cdef int64_t[::1] c = np.ascontiguousarray(peer_budgets, dtype=np.int64)
    cdef int64_t[::1] p = np.ascontiguousarray(peer_periods, dtype=np.int64)
    cdef Py_ssize_t m = c.shape[0], k, j
    cdef int64_t t, demand
    for k in range(1, a.shape[0]):
        t = k * resolution
        demand = budget
        for j in range(m):
            demand += ((t + p[j] - 1) // p[j]) * c[j]
        if demand <= a[k]:
            return k
    return -1
