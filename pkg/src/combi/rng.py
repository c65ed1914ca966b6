"""Portable seeded generator used wherever output must be reproducible
across implementations (hyperplanes, seeded bit orderings).

Pipeline
--------
* state: four successive outputs of splitmix64 started from ``seed mod 2**64``
* generator: xoshiro256** (Blackman & Vigna)
* uniform: ``(next() >> 11) * 2**-53`` in [0, 1)
* normal: Box-Muller on consecutive uniform pairs ``(u1, u2)``::

      r  = sqrt(-2 ln(1 - u1))
      z0 = r cos(2 pi u2)
      z1 = r sin(2 pi u2)

  both outputs are used, ``z0`` first. ``1 - u1`` lies in (0, 1], so the
  log is always finite.
* integer below n: ``next() % n`` (bias is at most n / 2**64).
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** seeded through splitmix64."""

    def __init__(self, seed: int):
        sm = seed & MASK64
        state = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            state.append(out)
        self._s = state
        self._spare: float | None = None

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

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)

    def below(self, n: int) -> int:
        return self.next_u64() % n

    def normals(self, count: int) -> list[float]:
        return [self.normal() for _ in range(count)]
