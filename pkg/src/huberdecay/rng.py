"""Deterministic 64-bit PRNG (splitmix64) for reproducible synthetic data.

The generator is pinned by its algorithm rather than by any library so that
identical seeds reproduce identical streams everywhere: the state advances by
the golden-gamma constant and the output is the standard 30/27/31 xor-shift
multiply finalizer. Uniforms take the top 53 bits; normals use Box-Muller.
"""

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """The splitmix64 output finalizer; a bijection on 64-bit ints."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *streams: int) -> int:
    """Fold stream identifiers into a seed to get independent substreams."""
    h = mix64((seed & _MASK64) + _GAMMA)
    for s in streams:
        h = mix64((h ^ (s & _MASK64)) + _GAMMA)
    return h


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._gauss_cache: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return mix64(self._state)

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)], dtype=np.float64)

    def normal(self) -> float:
        """Standard normal via Box-Muller (pair cached)."""
        if self._gauss_cache is not None:
            z = self._gauss_cache
            self._gauss_cache = None
            return z
        # u1 in (0, 1] so log() is safe
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._gauss_cache = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def randint(self, n: int) -> int:
        """Integer in [0, n). Modulo bias is < n/2**64, negligible here."""
        if n <= 0:
            raise ValueError(f"n must be positive, got {n!r}")
        return self.next_u64() % n

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n)."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.array(perm, dtype=np.int64)
