"""Orthonormal discrete wavelet transforms with periodized boundaries.

Filters are quadrature-mirror pairs (g[n] = (-1)^n h[L-1-n]); the analysis
convention is

    approx[k] = sum_n h[n] * x[(2k + n) mod N]
    detail[k] = sum_n g[n] * x[(2k + n) mod N]

so every level halves each axis exactly and total coefficient energy equals
signal energy. The 2D step is separable: filter along rows, then along the
columns of both results, giving (ll, lh, hl, hh) where ``lh`` is the
column-highpass of the row-lowpass and ``hl`` the column-lowpass of the
row-highpass. Multi-level decomposition recurses on ``ll``; detail triples
are stored coarsest-first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import active_backend, kernels

__all__ = [
    "WaveletFilter",
    "SubbandPyramid",
    "build_filter",
    "dwt1d",
    "idwt1d",
    "decompose2d",
    "reconstruct2d",
    "active_backend",
]

_ORTHO_TOL = 1e-10

# 8-tap Daubechies lowpass with 4 vanishing moments, minimum-phase ordering.
# Verified against the spectral factorization of the Daubechies polynomial
# and the orthonormality / vanishing-moment conditions (see test suite).
_DB4_LOWPASS = (
    0.23037781330885523,
    0.71484657055254153,
    0.63088076792959036,
    -0.02798376941698385,
    -0.18703481171888114,
    0.03084138183598697,
    0.03288301166698295,
    -0.01059740178499728,
)


@dataclass(frozen=True)
class WaveletFilter:
    """Orthonormal analysis pair; highpass is derived, never stored stale."""

    name: str
    lowpass: np.ndarray
    highpass: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.lowpass, dtype=np.float64)
        g = np.asarray(self.highpass, dtype=np.float64)
        object.__setattr__(self, "lowpass", h)
        object.__setattr__(self, "highpass", g)
        L = h.size
        if L < 2 or L % 2 != 0:
            raise ValueError(f"filter length must be even and >= 2, got {L}")
        if abs(h.sum() - np.sqrt(2.0)) > _ORTHO_TOL:
            raise ValueError(f"{self.name}: lowpass taps must sum to sqrt(2)")
        if abs((h * h).sum() - 1.0) > _ORTHO_TOL:
            raise ValueError(f"{self.name}: lowpass taps must have unit energy")
        for k in range(1, L // 2):
            if abs(np.dot(h[: L - 2 * k], h[2 * k :])) > _ORTHO_TOL:
                raise ValueError(f"{self.name}: even shift {k} not orthogonal")
        qmf = _qmf(h)
        if not np.array_equal(g, qmf):
            raise ValueError(f"{self.name}: highpass is not the mirror of lowpass")

    def __len__(self) -> int:
        return self.lowpass.size


def _qmf(h: np.ndarray) -> np.ndarray:
    L = h.size
    signs = np.where(np.arange(L) % 2 == 0, 1.0, -1.0)
    return signs * h[::-1]


def build_filter(name: str) -> WaveletFilter:
    """Construct one of the supported filters by name ("haar" or "db4")."""
    if name == "haar":
        h = np.array([1.0, 1.0]) / np.sqrt(2.0)
    elif name == "db4":
        h = np.array(_DB4_LOWPASS)
    else:
        raise ValueError(f"unknown wavelet {name!r} (supported: haar, db4)")
    return WaveletFilter(name=name, lowpass=h, highpass=_qmf(h))


@dataclass
class SubbandPyramid:
    """L-level decomposition: coarsest approximation plus detail triples.

    ``details[0]`` is the coarsest level (same shape as ``ll``);
    ``details[-1]`` is the finest.
    """

    levels: int
    ll: np.ndarray
    details: list = field(default_factory=list)  # [(lh, hl, hh), ...]

    def all_subbands(self):
        """Yield (label, matrix) pairs, approximation first, coarsest-first."""
        yield f"ll{self.levels}", self.ll
        for i, (lh, hl, hh) in enumerate(self.details):
            level = self.levels - i
            yield f"lh{level}", lh
            yield f"hl{level}", hl
            yield f"hh{level}", hh

    def energy(self) -> float:
        return float(sum((m * m).sum() for _, m in self.all_subbands()))


def _check_1d(x: np.ndarray, f: WaveletFilter) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("dwt1d expects a 1D signal")
    if x.size % 2 != 0:
        raise ValueError(f"signal length {x.size} is odd")
    if x.size < len(f):
        raise ValueError(f"signal length {x.size} shorter than filter ({len(f)})")
    return x


def dwt1d(signal: np.ndarray, f: WaveletFilter):
    """One periodized analysis step; returns (approx, detail) of length N/2."""
    x = _check_1d(signal, f)
    lo, hi = kernels.analysis_rows(x[None, :], f.lowpass, f.highpass)
    return lo[0], hi[0]


def idwt1d(approx: np.ndarray, detail: np.ndarray, f: WaveletFilter) -> np.ndarray:
    """Exact inverse of dwt1d."""
    a = np.ascontiguousarray(approx, dtype=np.float64)
    d = np.ascontiguousarray(detail, dtype=np.float64)
    if a.shape != d.shape or a.ndim != 1:
        raise ValueError("approx and detail must be 1D and equal length")
    out = kernels.synthesis_rows(a[None, :], d[None, :], f.lowpass, f.highpass)
    return out[0]


def _analysis_cols(m: np.ndarray, f: WaveletFilter):
    lo_t, hi_t = kernels.analysis_rows(
        np.ascontiguousarray(m.T), f.lowpass, f.highpass
    )
    return np.ascontiguousarray(lo_t.T), np.ascontiguousarray(hi_t.T)


def _synthesis_cols(lo: np.ndarray, hi: np.ndarray, f: WaveletFilter) -> np.ndarray:
    out_t = kernels.synthesis_rows(
        np.ascontiguousarray(lo.T),
        np.ascontiguousarray(hi.T),
        f.lowpass,
        f.highpass,
    )
    return np.ascontiguousarray(out_t.T)


def decompose2d(m: np.ndarray, f: WaveletFilter, levels: int) -> SubbandPyramid:
    """Separable 2D decomposition, recursing `levels` times on the LL band."""
    m = np.ascontiguousarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("decompose2d expects a 2D matrix")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    rows, cols = m.shape
    div = 1 << levels
    if rows % div != 0 or cols % div != 0:
        raise ValueError(
            f"matrix {rows}x{cols} not divisible by 2^levels = {div}"
        )
    if min(rows, cols) // (1 << (levels - 1)) < len(f):
        raise ValueError(
            f"matrix {rows}x{cols} too small for {levels} levels of {f.name}"
        )
    details = []
    cur = m
    for _ in range(levels):
        lo, hi = kernels.analysis_rows(cur, f.lowpass, f.highpass)
        ll, lh = _analysis_cols(lo, f)
        hl, hh = _analysis_cols(hi, f)
        details.append((lh, hl, hh))
        cur = ll
    details.reverse()
    return SubbandPyramid(levels=levels, ll=cur, details=details)


def reconstruct2d(p: SubbandPyramid, f: WaveletFilter) -> np.ndarray:
    """Exact inverse of decompose2d."""
    if len(p.details) != p.levels:
        raise ValueError(
            f"pyramid claims {p.levels} levels but holds {len(p.details)} triples"
        )
    cur = np.ascontiguousarray(p.ll, dtype=np.float64)
    for lh, hl, hh in p.details:
        if not (lh.shape == hl.shape == hh.shape == cur.shape):
            raise ValueError(
                f"subband shapes {lh.shape}/{hl.shape}/{hh.shape} do not match "
                f"approximation {cur.shape}"
            )
        lo = _synthesis_cols(cur, np.ascontiguousarray(lh, dtype=np.float64), f)
        hi = _synthesis_cols(
            np.ascontiguousarray(hl, dtype=np.float64),
            np.ascontiguousarray(hh, dtype=np.float64),
            f,
        )
        cur = kernels.synthesis_rows(lo, hi, f.lowpass, f.highpass)
    return cur
