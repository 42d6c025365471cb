"""Counter-based mixing and the SplitMix64 stream used everywhere in the package.

Every random quantity (landscape tables, linkage, start genomes, mutation
choices, vote errors) is derived from 64-bit integer seeds through the
functions below, so results are independent of numpy's generator internals
and identical across platforms and library versions.

The mixer is the SplitMix64 finalizer (Steele, Lea & Flood 2014)::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

all arithmetic modulo 2**64. Do not change the constants: every stored
landscape is defined by them.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX_M1 = 0xBF58476D1CE4E5B9
MIX_M2 = 0x94D049BB133111EB
UNIT = 2.0**-53

# Purpose tags separating independent seed streams.
TAG_FITNESS = 1
TAG_LINKAGE = 2
TAG_LANDSCAPE = 3
TAG_START = 4


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche mix of a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_M1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_M2) & MASK64
    return z ^ (z >> 31)


def to_unit(u: int) -> float:
    """Map a 64-bit integer to a double in [0, 1) using its top 53 bits."""
    return (u >> 11) * UNIT


def derive_seed(root: int, *keys: int) -> int:
    """Derive a child seed from ``root`` and a path of non-negative integer keys.

    ``derive_seed(r, a, b)`` is ``mix64(mix64(mix64(r) + (a+1)*GOLDEN) + (b+1)*GOLDEN)``.
    Distinct key paths give statistically independent seeds.
    """
    z = mix64(root & MASK64)
    for key in keys:
        if key < 0:
            raise ValueError(f"seed keys must be non-negative, got {key}")
        z = mix64((z + (key + 1) * GOLDEN) & MASK64)
    return z


class SplitMix64:
    """The SplitMix64 generator: ``state += GOLDEN; return mix64(state)``."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        return to_unit(self.next_u64())

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return int(self.uniform() * n)

    def bit(self) -> int:
        return self.next_u64() >> 63
