"""Portable pseudo-random streams for phantom generation.

Scalar draws come from xoshiro256** whose 256-bit state is filled by
splitmix64 from the 64-bit seed. Bulk arrays (noise fields) use a splitmix64
counter stream keyed by one xoshiro output, which vectorizes exactly: element
k of a bulk draw is ``mix(key + (k + 1) * GAMMA)``.

Uniform doubles take the top 53 bits: ``(u64 >> 11) * 2**-53``. Normals use
Box-Muller on pairs (u1, u2) with ``r = sqrt(-2 ln(1 - u1))``, ``cos(2 pi u2)``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def splitmix64_mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return splitmix64_mix(self.state)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def _splitmix_array(key: int, n: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = np.uint64(key) + (np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GAMMA))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class Rng:
    """xoshiro256** generator seeded through splitmix64."""

    def __init__(self, seed: int):
        sm = SplitMix64(seed)
        self.s = [sm.next() for _ in range(4)]

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0 ** -53)

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        u1, u2 = self.uniform(), self.uniform()
        return mean + std * float(np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2))

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi)."""
        span = hi - lo
        if span <= 0:
            raise ValueError("empty integer range")
        return lo + int(self.uniform() * span)

    def shuffle(self, items: list) -> list:
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.integers(0, i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def uniform_array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        bits = _splitmix_array(self.next_u64(), n)
        return ((bits >> np.uint64(11)).astype(np.float64) * 2.0 ** -53).reshape(shape)

    def normal_array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        u = self.uniform_array((2, n))
        z = np.sqrt(-2.0 * np.log(1.0 - u[0])) * np.cos(2.0 * np.pi * u[1])
        return z.reshape(shape)
