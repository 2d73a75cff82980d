"""Deterministic sample-point generation.

All randomness in the project flows through splitmix64 so that runs are
bit-reproducible across platforms and Python versions.
"""
from __future__ import annotations

from typing import Mapping

_MASK = (1 << 64) - 1


class SplitMix64:
    """splitmix64 with the reference constants; yields 64-bit integers."""

    GAMMA = 0x9E3779B97F4A7C15
    M1 = 0xBF58476D1CE4E5B9
    M2 = 0x94D049BB133111EB

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * self.M1) & _MASK
        z = ((z ^ (z >> 27)) * self.M2) & _MASK
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        """Uniform double in [0, 1): top 53 bits over 2**53."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_unit()


def sample_points(ranges: Mapping[str, tuple[float, float]], count: int,
                  seed: int) -> list[dict[str, float]]:
    """Draw ``count`` points, one coordinate per range entry.

    The stream is consumed variable-major: all draws for the
    lexicographically first variable come first, then the next variable,
    so adding points extends each coordinate column without reshuffling.
    """
    points: list[dict[str, float]] = [{} for _ in range(count)]
    rng = SplitMix64(seed)
    for name in sorted(ranges):
        lo, hi = ranges[name]
        for k in range(count):
            points[k][name] = rng.uniform(lo, hi)
    return points


def derive_seed(seed: int, tag: str) -> int:
    """Stable sub-stream seed for auxiliary draws (test fields, entry picks)."""
    h = seed & _MASK
    for ch in tag:
        h = ((h ^ ord(ch)) * 0x100000001B3) & _MASK
    return h
