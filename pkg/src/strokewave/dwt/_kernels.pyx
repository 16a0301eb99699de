# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled periodized stride-2 filter-bank kernels (hot loop of the 2D DWT)."""

import numpy as np

BACKEND = "compiled"


def analysis_rows(double[:, ::1] x, double[::1] h, double[::1] g):
    """Periodized stride-2 analysis along axis 1 of a 2D array."""
    cdef Py_ssize_t n_rows = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t taps = h.shape[0]
    cdef Py_ssize_t half = n // 2
    lo = np.empty((n_rows, half))
    hi = np.empty((n_rows, half))
    cdef double[:, ::1] lo_v = lo
    cdef double[:, ::1] hi_v = hi
    cdef Py_ssize_t r, k, t, idx
    cdef double sa, sd, v
    for r in range(n_rows):
        for k in range(half):
            sa = 0.0
            sd = 0.0
            for t in range(taps):
                idx = 2 * k + t
                if idx >= n:  # 2k+t < 2n holds whenever taps <= n
                    idx -= n
                v = x[r, idx]
                sa += h[t] * v
                sd += g[t] * v
            lo_v[r, k] = sa
            hi_v[r, k] = sd
    return lo, hi


def synthesis_rows(double[:, ::1] lo, double[:, ::1] hi,
                   double[::1] h, double[::1] g):
    """Inverse of analysis_rows along axis 1."""
    cdef Py_ssize_t n_rows = lo.shape[0]
    cdef Py_ssize_t half = lo.shape[1]
    cdef Py_ssize_t n = 2 * half
    cdef Py_ssize_t taps = h.shape[0]
    out = np.zeros((n_rows, n))
    cdef double[:, ::1] out_v = out
    cdef Py_ssize_t r, k, t, idx
    cdef double a, d
    for r in range(n_rows):
        for k in range(half):
            a = lo[r, k]
            d = hi[r, k]
            for t in range(taps):
                idx = 2 * k + t
                if idx >= n:
                    idx -= n
                out_v[r, idx] += h[t] * a + g[t] * d
    return out
