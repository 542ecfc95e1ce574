"""SplitMix64 random streams.

The synthetic generator draws every random number from here so that a seed
produces the same dataset on any platform and any numpy version.  SplitMix64
is counter based: output ``n`` of a stream seeded with ``s`` is
``mix(s + (n + 1) * GAMMA)``, which lets us draw whole blocks with uint64
array arithmetic (wrap-around modulo 2**64 is exactly what numpy does).

Reference: Steele, Lea & Flood, "Fast splittable pseudorandom number
generators" (OOPSLA 2014); constants match Java's ``SplittableRandom``.
"""

from __future__ import annotations

import hashlib

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def derive_seed(seed: int, label: str) -> int:
    """Stable 64-bit sub-seed for a named substream."""
    digest = hashlib.sha256(f"{seed & 0xFFFFFFFFFFFFFFFF}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class SplitMix64:
    """A SplitMix64 stream with block draws.

    >>> SplitMix64(0).next_u64(1)[0] == 0xE220A8397B1DCDAF
    True
    """

    def __init__(self, seed: int):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self.counter = 0

    @classmethod
    def substream(cls, seed: int, label: str) -> "SplitMix64":
        return cls(derive_seed(seed, label))

    def next_u64(self, n: int) -> np.ndarray:
        steps = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix(self.seed + steps * GAMMA)

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in [0, 1) with 53 random bits each."""
        return (self.next_u64(n) >> _S11).astype(np.float64) * _INV53

    def normal(self, n: int) -> np.ndarray:
        """Standard normals by Box-Muller (uses ``2 * ceil(n / 2)`` uniforms)."""
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1], keeps log finite
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        return out[:n]

    def choice_cdf(self, cdf: np.ndarray, n: int) -> np.ndarray:
        """Indices drawn from a (not necessarily normalised) cumulative table."""
        u = self.uniform(n) * cdf[-1]
        return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
