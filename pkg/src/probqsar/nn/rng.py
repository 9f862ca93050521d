"""Deterministic random streams: splitmix64-seeded xoshiro256**.

The generator runs ``LANES`` independent xoshiro256** states side by side so
that bulk draws vectorise. Lane ``j`` is seeded with splitmix64 outputs
``4j .. 4j+3`` of the user seed. A draw of ``n`` values advances every lane
``ceil(n / LANES)`` times and reads values round-major (round 0 lanes 0..63,
round 1 lanes 0..63, ...); surplus values of the last round are discarded.
Everything is plain 64-bit integer arithmetic, so streams are identical on
every platform.
"""

from __future__ import annotations

import numpy as np

LANES = 64
MASK64 = (1 << 64) - 1
_TWO_NEG53 = 1.0 / (1 << 53)


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def mix_seed(*keys: int) -> int:
    """Fold integers into one 64-bit seed through splitmix64."""
    state = 0
    for k in keys:
        state, out = splitmix64(state ^ (int(k) & MASK64))
        state = out
    return state


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Prng:
    """Seeded stream of uniform, normal and integer draws."""

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & MASK64
        state = self.seed
        words = []
        for _ in range(4 * LANES):
            state, out = splitmix64(state)
            words.append(out)
        s = np.array(words, dtype=np.uint64).reshape(LANES, 4).T.copy()
        # xoshiro must not start from the all-zero state
        s[0, (s == 0).all(axis=0)] = np.uint64(1)
        self._s = s

    def derive(self, *keys: int) -> "Prng":
        """Independent child stream keyed by ``keys``; does not advance this stream."""
        return Prng(mix_seed(self.seed, *keys))

    def _round(self) -> np.ndarray:
        s = self._s
        result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
        t = s[1] << np.uint64(17)
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def next_u64(self, n: int) -> np.ndarray:
        rounds = -(-n // LANES)
        if rounds == 0:
            return np.empty(0, dtype=np.uint64)
        out = np.concatenate([self._round() for _ in range(rounds)])
        return out[:n]

    def uniform(self, size: int | tuple[int, ...]) -> np.ndarray:
        """Doubles in [0, 1) from the top 53 bits."""
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG53
        return u.reshape(shape)

    def normal(self, size: int | tuple[int, ...]) -> np.ndarray:
        """Standard normals by the Box-Muller transform."""
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape, dtype=np.int64))
        pairs = -(-n // 2)
        u = self.uniform(2 * pairs)
        u1 = 1.0 - u[:pairs]  # (0, 1]
        u2 = u[pairs:]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n].reshape(shape)

    def integers(self, high: int, size: int) -> np.ndarray:
        """Integers in [0, high)."""
        return np.minimum((self.uniform(size) * high).astype(np.int64), high - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = np.arange(n)
        u = self.uniform(n)
        for i in range(n - 1, 0, -1):
            j = min(int(u[i] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
