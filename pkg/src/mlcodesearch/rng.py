"""Deterministic random numbers built on the published splitmix64 generator.

All sampling in this project (test-set draws, negative pairing, MLM masking,
weight init) goes through this module so that results are reproducible from a
seed alone, independent of interpreter or library versions.

splitmix64 (Steele, Lea & Flood; public-domain reference by Sebastiano Vigna)
advances a 64-bit state by the golden-ratio constant and mixes it through two
xor-shift-multiply rounds.  Output i is a pure function of ``seed + (i+1) *
GAMMA``, which also makes block draws vectorizable with numpy uint64 math.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# float in [0, 1) from the top 53 bits
_INV_2_53 = 2.0 ** -53


def mix64(z: int) -> int:
    """The splitmix64 output function applied to one 64-bit state value."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential splitmix64 stream with sampling helpers.

    Integer draws use rejection sampling, so ``randbelow`` is exactly uniform.
    Block draws (``next_doubles``/``next_normals``) consume one state step per
    underlying 64-bit output, identical to calling ``next_u64`` in a loop.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & MASK64

    @property
    def state(self) -> int:
        return self._state

    def next_u64(self) -> int:
        self._state = (self._state + GAMMA) & MASK64
        return mix64(self._state)

    def spawn(self) -> "SplitMix64":
        """Child stream seeded from the next output of this stream."""
        return SplitMix64(self.next_u64())

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) with rejection sampling (no modulo bias)."""
        if n <= 0:
            raise ValueError(f"randbelow requires n >= 1, got {n}")
        limit = MASK64 + 1 - ((MASK64 + 1) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def random(self) -> float:
        """Uniform float in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * _INV_2_53

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices drawn without replacement from range(n).

        Partial Fisher-Yates: equivalent to shuffling range(n) and taking the
        first k, without materializing the full permutation's draws.
        """
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        pool = list(range(n))
        out = []
        top = n
        for _ in range(k):
            j = self.randbelow(top)
            pool[j], pool[top - 1] = pool[top - 1], pool[j]
            top -= 1
            out.append(pool[top])
        return out

    # -- vectorized block draws ------------------------------------------

    def _next_block_u64(self, count: int) -> np.ndarray:
        """count raw outputs as uint64, advancing state by count steps."""
        if count < 0:
            raise ValueError("count must be non-negative")
        start = np.uint64(self._state)
        with np.errstate(over="ignore"):
            steps = (np.arange(1, count + 1, dtype=np.uint64)
                     * np.uint64(GAMMA) + start)
            z = (steps ^ (steps >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self._state = (self._state + count * GAMMA) & MASK64
        return z

    def next_doubles(self, count: int) -> np.ndarray:
        """count uniform floats in [0, 1), float64."""
        bits = self._next_block_u64(count)
        return (bits >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def next_normals(self, count: int) -> np.ndarray:
        """count standard normals via Box-Muller on paired uniforms."""
        half = (count + 1) // 2
        u1 = self.next_doubles(half)
        u2 = self.next_doubles(half)
        # shift u1 into (0, 1] so log never sees zero
        r = np.sqrt(-2.0 * np.log(1.0 - u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:count]
