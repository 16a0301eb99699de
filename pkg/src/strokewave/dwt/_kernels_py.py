"""Vectorized numpy fallback for the periodized stride-2 filter-bank kernels.

Same contracts as the compiled module ``_kernels``: analysis produces, for
each row, approx[k] = sum_n h[n] * x[(2k+n) mod N] and the matching detail
with g; synthesis is the transpose (exact inverse for orthonormal banks).
Accumulation runs over n in tap order, matching the compiled loop, so the
two backends agree to the last few ulps.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def analysis_rows(x: np.ndarray, h: np.ndarray, g: np.ndarray):
    """Periodized stride-2 analysis along axis 1 of a 2D array."""
    n_rows, n = x.shape
    half = n // 2
    lo = np.zeros((n_rows, half))
    hi = np.zeros((n_rows, half))
    base = 2 * np.arange(half)
    for tap in range(len(h)):
        cols = (base + tap) % n
        sl = x[:, cols]
        lo += h[tap] * sl
        hi += g[tap] * sl
    return lo, hi


def synthesis_rows(lo: np.ndarray, hi: np.ndarray, h: np.ndarray, g: np.ndarray):
    """Inverse of analysis_rows along axis 1."""
    n_rows, half = lo.shape
    n = 2 * half
    out = np.zeros((n_rows, n))
    base = 2 * np.arange(half)
    for tap in range(len(h)):
        cols = (base + tap) % n  # distinct for a fixed tap, so += is safe
        out[:, cols] += h[tap] * lo + g[tap] * hi
    return out
