"""SplitMix64 generator and seed derivation.

Everything that must be bit-reproducible across platforms (world layouts,
trajectory sampling, episode setup) draws from :class:`SplitMix64`. Bulk
Monte-Carlo work uses numpy generators seeded through :func:`derive_seed`.
"""
from __future__ import annotations

import hashlib
import math
from typing import Sequence, TypeVar

import numpy as np

MASK64 = (1 << 64) - 1
T = TypeVar("T")


def derive_seed(parent: int, *labels) -> int:
    """Hash ``(parent, *labels)`` into a fresh 64-bit seed."""
    key = repr((int(parent) & MASK64,) + tuple(labels)).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = MASK64 - (MASK64 + 1) % n
        while True:
            x = self.next_u64()
            if x <= limit:
                return x % n

    def randint(self, lo: int, hi: int) -> int:
        """Integer in the closed range [lo, hi]."""
        return lo + self.randbelow(hi - lo + 1)

    def choice(self, seq: Sequence[T]) -> T:
        return seq[self.randbelow(len(seq))]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, seq: Sequence[T], k: int) -> list[T]:
        pool = list(seq)
        self.shuffle(pool)
        return pool[:k]

    def normal(self) -> float:
        # Box-Muller, both outputs used
        if self._spare_normal is not None:
            z, self._spare_normal = self._spare_normal, None
            return z
        u1 = 1.0 - self.random()
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def numpy(self) -> np.random.Generator:
        """A numpy generator seeded from this stream."""
        return np.random.default_rng(self.next_u64())
