"""Seeded 64-bit random stream used everywhere randomness is needed.

The generator is a splitmix64 counter: each draw advances the state by a
fixed odd constant and mixes it. One implementation of the stream is
bit-reproducible for a given seed; scalar and vectorized draws follow the
same sequence. Normal variates come from Box-Muller and consume exactly
two 64-bit draws each.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, *tags: int) -> int:
    """Deterministically fold integer tags into a seed.

    Used to hand out independent sub-streams (per sample, per epoch, ...)
    so that parallel and sequential execution see identical randomness.
    """
    s = seed & _MASK
    for t in tags:
        s = _mix((s + _GAMMA) & _MASK ^ (t & _MASK))
    return s


class RngStream:
    """Splitmix64 stream with uniform and Box-Muller normal draws."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return _mix(self.state)

    def _u64_block(self, n: int) -> np.ndarray:
        # Vectorized counter mix; identical to n next_u64() calls.
        ks = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(self.state) + ks * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GAMMA) & _MASK
        return z

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * 2.0**-53  # in [0, 1)
        return lo + (hi - lo) * u

    def uniforms(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        u = (self._u64_block(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return lo + (hi - lo) * u

    def normals(self, n: int, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        u = self.uniforms(2 * n)
        r = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))  # 1-u in (0, 1], log finite
        phi = (2.0 * np.pi) * u[1::2]
        return mu + sigma * r * np.cos(phi)

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        return float(self.normals(1, mu, sigma)[0])

    def randint(self, n: int) -> int:
        """Integer in [0, n). Modulo bias is below 2**-64 * n, ignored."""
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates driven by this stream."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
