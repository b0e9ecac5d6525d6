"""Counter-based deterministic random number generator (splitmix64).

The generator is a 64-bit counter advanced by a fixed odd constant, with a
bijective finalizer mixing each counter value into an output word. Because
output i depends only on ``seed + (i+1)*GAMMA``, draws can be produced one at
a time or in bulk and the streams are identical; ``uniform_array`` exploits
that with vectorized uint64 arithmetic.

Floats are built as ``(z >> 11) * 2**-53``, uniform on [0, 1) with full
53-bit significand coverage.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_TO_UNIT = 2.0 ** -53


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    # Same finalizer on uint64 arrays; overflow wraps mod 2**64 by construction.
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
        return z ^ (z >> np.uint64(31))


class Rng:
    """splitmix64 stream seeded with a 64-bit integer.

    The same seed always yields the same stream, independent of draw
    granularity (scalar calls vs array calls) and of platform.
    """

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK

    @property
    def state(self) -> int:
        return self._state

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix(self._state)

    def next_float(self) -> float:
        """Uniform draw on [0, 1)."""
        return (self.next_u64() >> 11) * _TO_UNIT

    def uniform(self, lo: float, hi: float) -> float:
        """Uniform draw on [lo, hi)."""
        return lo + (hi - lo) * self.next_float()

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """n uniform draws on [lo, hi); identical to n scalar ``uniform`` calls."""
        if n < 0:
            raise ValueError(f"draw count must be >= 0, got {n}")
        counters = (
            np.uint64(self._state)
            + np.uint64(_GAMMA) * np.arange(1, n + 1, dtype=np.uint64)
        )
        self._state = (self._state + n * _GAMMA) & _MASK
        unit = (_mix_array(counters) >> np.uint64(11)).astype(np.float64) * _TO_UNIT
        return lo + (hi - lo) * unit

    def below(self, n: int) -> int:
        """Integer uniform on [0, n) by rejection-free modulo (n << 2**64)."""
        if n <= 0:
            raise ValueError(f"bound must be positive, got {n}")
        return self.next_u64() % n

    def shuffle(self, items: np.ndarray) -> None:
        """In-place Fisher-Yates shuffle along axis 0."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[[i, j]] = items[[j, i]]

    def derive(self, tag: int) -> "Rng":
        """Independent child stream; stable function of (seed, tag)."""
        return Rng(_mix((self._state ^ _mix(tag & _MASK)) & _MASK))
