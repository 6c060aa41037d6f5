"""Portable deterministic random number generation.

Every stochastic subsystem (world generation, spawning, behavior, dataset
splitting) draws from its own substream so that adding draws to one subsystem
never perturbs another. A substream is derived from the master seed and a
string label via ``stream(seed, label)``; the derivation is pure 64-bit
integer arithmetic (splitmix64 mixing of the FNV-1a hash of the label), so
sequences are identical across platforms and Python versions.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    """splitmix64 finalizer: bijective avalanche mix of a 64-bit word."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


class Rng:
    """splitmix64 generator.

    State is a single 64-bit word, exposed via :attr:`state` so simulation
    snapshots can carry the generator along and replay bit-identically.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    @property
    def state(self) -> int:
        return self._state

    @classmethod
    def from_state(cls, state: int) -> Rng:
        return cls(state)

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix64(self._state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randrange(self, n: int) -> int:
        """Uniform-ish integer in [0, n). Modulo reduction; the bias at
        64 bits is far below anything observable here and the scheme is
        trivially portable."""
        if n <= 0:
            raise ValueError("randrange() bound must be positive")
        return self.next_u64() % n

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError("randint() empty range")
        return lo + self.randrange(hi - lo + 1)

    def choice(self, seq):
        if not seq:
            raise ValueError("choice() from empty sequence")
        return seq[self.randrange(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]


def stream(seed: int, label: str) -> Rng:
    """Substream of the master ``seed`` named by ``label``.

    Substreams are independent of draw order: two substreams with different
    labels never share state no matter how much either is consumed.
    """
    return Rng(_mix64((seed & _MASK64) ^ _fnv1a64(label.encode("utf-8"))))
