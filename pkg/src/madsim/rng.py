"""Portable seeded randomness.

Every random choice in a simulation run goes through :class:`Rng`, a
xoshiro256** generator seeded by SplitMix64.  Both algorithms are fully
specified in integer arithmetic, so streams are identical on every
platform and Python version.  Per-run seeds come from :func:`mix`, which
lets parallel workers derive their streams without sharing state.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from typing import TypeVar

T = TypeVar("T")

MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def mix(seed: int, index: int) -> int:
    """Derive an independent 64-bit seed from ``(seed, index)``."""
    _, a = splitmix64(seed & MASK64)
    _, b = splitmix64((a ^ (index & MASK64)) & MASK64)
    return b


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Rng:
    """xoshiro256** with a few convenience draws."""

    def __init__(self, seed: int):
        state = seed & MASK64
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Unbiased integer in ``[0, n)`` (rejection sampling)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def choice(self, items: Sequence[T]) -> T:
        return items[self.below(len(items))]

    def bernoulli(self, p: float) -> bool:
        if p <= 0.0:
            return False
        if p >= 1.0:
            return True
        return self.random() < p

    def normal(self, mean: float = 0.0, sd: float = 1.0) -> float:
        """Marsaglia polar method; one variate per call, the spare is dropped.

        Uses only ``sqrt`` (correctly rounded under IEEE 754) and ``log``.
        """
        while True:
            u = 2.0 * self.random() - 1.0
            v = 2.0 * self.random() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        return mean + sd * u * math.sqrt(-2.0 * math.log(s) / s)
