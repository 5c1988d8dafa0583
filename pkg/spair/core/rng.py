"""Portable seeded PRNG: splitmix64 seeding of xoshiro256**.

Scalar draws advance the main stream one step each. Bulk array draws take one value from
the main stream, seed 256 independent lanes from it with splitmix64, and read the lanes
step-major (step 0 lanes 0..255, step 1 lanes 0..255, ...). Both schemes are plain integer
arithmetic, so any language can reproduce the exact byte streams.
"""
from typing import List, MutableSequence, Sequence, Tuple, TypeVar

import numpy as np

MASK64 = (1 << 64) - 1
LANES = 256
_DOUBLE_SCALE = 1.0 / (1 << 53)

T = TypeVar("T")


def splitmix64(state: int) -> Tuple[int, int]:
    """Return (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Rng:
    """xoshiro256** generator."""

    def __init__(self, seed: int):
        state = int(seed) & MASK64
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._s = words

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _DOUBLE_SCALE

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def integers(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi) by multiply-shift range reduction."""
        span = hi - lo
        if span <= 0:
            raise ValueError(f"empty integer range [{lo}, {hi})")
        return lo + ((self.next_u64() * span) >> 64)

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def choice(self, items: Sequence[T]) -> T:
        return items[self.integers(0, len(items))]

    def shuffle(self, items: MutableSequence) -> None:
        """In-place Fisher-Yates from the last element down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integers(0, i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> List[int]:
        order = list(range(n))
        self.shuffle(order)
        return order

    def split(self) -> int:
        """Child seed for an independent stream."""
        return self.next_u64()

    def random_array(self, shape, dtype=np.float64) -> np.ndarray:
        """Uniform [0, 1) array drawn through the lane scheme."""
        size = int(np.prod(shape, dtype=np.int64))
        if size == 0:
            return np.zeros(shape, dtype=dtype)
        state = self.next_u64()
        lanes = np.empty((4, LANES), dtype=np.uint64)
        for lane in range(LANES):
            for word in range(4):
                state, out = splitmix64(state)
                lanes[word, lane] = out
        steps = -(-size // LANES)
        raw = np.empty((steps, LANES), dtype=np.uint64)
        s0, s1, s2, s3 = lanes
        five, nine = np.uint64(5), np.uint64(9)
        for step in range(steps):
            x = s1 * five
            raw[step] = ((x << np.uint64(7)) | (x >> np.uint64(57))) * nine
            t = s1 << np.uint64(17)
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
        values = (raw.reshape(-1)[:size] >> np.uint64(11)).astype(np.float64) * _DOUBLE_SCALE
        return values.reshape(shape).astype(dtype)

    def uniform_array(self, shape, lo: float, hi: float, dtype=np.float64) -> np.ndarray:
        return (lo + (hi - lo) * self.random_array(shape)).astype(dtype)
