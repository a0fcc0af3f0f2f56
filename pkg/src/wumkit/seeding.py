"""Counter-free seed derivation.

Every random unit (tree, session, tree node) gets its own 64-bit key derived
by hashing its coordinates, so results never depend on scheduling order.
The native kernels implement ``mix64`` bit-for-bit identically.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche on 64-bit integers."""
    x = (x + GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive(*parts: int) -> int:
    """Hash a tuple of non-negative integers into one 64-bit seed."""
    h = 0x243F6A8885A308D3
    for p in parts:
        h = mix64(h ^ (int(p) & MASK64))
    return h


def child_key(key: int, side: int) -> int:
    """Key of the left (side=1) or right (side=2) child of a tree node."""
    return mix64((key * 3 + side) & MASK64)


def unit_interval(r: int) -> float:
    """Map a 64-bit value to the open interval (0, 1)."""
    return ((r >> 12) + 0.5) * (1.0 / 4503599627370496.0)


class SplitMix:
    """Tiny sequential stream used for feature permutations."""

    __slots__ = ("state",)

    def __init__(self, key: int):
        self.state = key & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)


def permutation(key: int, d: int) -> list[int]:
    """Fisher-Yates permutation of range(d) driven by ``SplitMix(key)``."""
    perm = list(range(d))
    rng = SplitMix(key)
    for i in range(d - 1, 0, -1):
        j = rng.next() % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm
