"""Counter-based random stream: splitmix64 of (seed, counter), scrambled by xorshift64*.

Draw ``k`` of a stream with seed ``s`` is a pure function of ``(s, k)``, so
bulk draws vectorize over numpy uint64 arrays and every implementation that
follows the recipe in docs/FORMATS.md reproduces the same bits.
"""

import math

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_XS_MULT = np.uint64(0x2545F4914F6CDD1D)
_ZERO_FIX = np.uint64(0x853C49E6748FEA9B)
_INV_2_53 = 1.0 / (1 << 53)


def _u64_stream(seed, start, n):
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + idx * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
        # xorshift64* output step; its state must be non-zero
        z = np.where(z == 0, _ZERO_FIX, z)
        z ^= z >> np.uint64(12)
        z ^= z << np.uint64(25)
        z ^= z >> np.uint64(27)
        return z * _XS_MULT


class Rng:
    """Random stream state: a 64-bit seed plus the index of the next draw."""

    def __init__(self, seed, counter=0):
        self.seed = int(seed) & _MASK
        self.counter = int(counter)

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"

    @property
    def state(self):
        return self.seed, self.counter

    def spawn(self):
        """Independent child stream seeded from the next draw."""
        return Rng(int(self.integers64(1)[0]))

    def integers64(self, n):
        out = _u64_stream(self.seed, self.counter, int(n))
        self.counter += int(n)
        return out

    def next_u64(self):
        return int(self.integers64(1)[0])

    def random(self, size=None):
        """Uniform doubles in [0, 1) from the top 53 bits of each draw."""
        n = 1 if size is None else int(np.prod(size))
        u = (self.integers64(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return float(u[0]) if size is None else u.reshape(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        u = self.random(size)
        return low + (high - low) * u

    def normal(self, loc=0.0, scale=1.0, size=None):
        """Box-Muller; consumes two draws per value."""
        n = 1 if size is None else int(np.prod(size))
        u = self.random(2 * n)
        u1 = 1.0 - u[:n]  # (0, 1]
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u[n:])
        z = loc + scale * z
        return float(z[0]) if size is None else z.reshape(size)

    def integers(self, low, high, size=None):
        """Integers in [low, high) by scaling a uniform draw."""
        span = high - low
        if span <= 0:
            raise ValueError("empty integer range")
        u = self.random(1 if size is None else size)
        v = low + np.minimum((np.asarray(u) * span).astype(np.int64), span - 1)
        return int(v.ravel()[0]) if size is None else v

    def poisson(self, lam):
        """Inverse-CDF Poisson, one draw per element of ``lam``."""
        lam = np.asarray(lam, dtype=np.float64)
        u = self.random(lam.size).reshape(lam.shape)
        k = np.zeros(lam.shape, dtype=np.int64)
        p = np.exp(-lam)
        cdf = p.copy()
        active = u >= cdf
        # guard against float round-off in the tail for large rates
        limit = int(np.max(lam, initial=0.0) * 4 + 40)
        for _ in range(limit):
            if not active.any():
                break
            k = k + active
            p = p * lam / np.maximum(k, 1)
            cdf = cdf + p
            active = active & (u >= cdf)
        return k

    def permutation(self, n):
        """Random permutation of range(n): stable argsort of n uniform keys."""
        return np.argsort(self.random(n), kind="stable")

    def choice(self, n, size):
        """Indices drawn uniformly with replacement from range(n)."""
        return self.integers(0, n, size=size)
