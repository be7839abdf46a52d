"""Deterministic pseudo-random numbers (SplitMix64 core).

Every stochastic choice in this package flows through Prng so that equal
seeds give bit-identical runs on every platform. Raw draws are SplitMix64;
uniforms divide by 2**64; Gaussians use Box-Muller with the second draw
cached.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO64 = float(1 << 64)


class Prng:
    """SplitMix64 generator with uniform/Gaussian/integer helpers."""

    __slots__ = ("state", "_cached_gauss")

    def __init__(self, seed: int):
        self.state = seed & _MASK64
        self._cached_gauss: float | None = None

    def next_u64(self) -> int:
        """Next raw 64-bit draw."""
        self.state = (self.state + _GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform float in [0, 1)."""
        return self.next_u64() / _TWO64

    def gauss(self) -> float:
        """Standard normal via Box-Muller (pairs cached)."""
        if self._cached_gauss is not None:
            g = self._cached_gauss
            self._cached_gauss = None
            return g
        # u1 in (0, 1] so the log is finite.
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._cached_gauss = radius * math.sin(theta)
        return radius * math.cos(theta)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n). Modulo bias is irrelevant at desk scale."""
        if n <= 0:
            raise ValueError("randint requires n > 0")
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items: list):
        return items[self.randint(len(items))]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), in random order."""
        if k > n:
            raise ValueError(f"cannot sample {k} from {n}")
        pool = list(range(n))
        self.shuffle(pool)
        return pool[:k]
