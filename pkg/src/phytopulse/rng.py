"""Seed-substream derivation and the in-kernel random generator.

Python-side randomness uses numpy's PCG64 seeded through SeedSequence over
an integer key tuple, so every component draws from an independent,
platform-stable stream. Compiled kernels (tree growing, SMO) cannot hold a
Generator, so they use an explicit splitmix64 state seeded from the same
SeedSequence machinery; bounded integers come from the top 53 bits scaled
into [0, n), which keeps results identical on every platform.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _key(parts: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(int(p) & _MASK64 for p in parts)


def substream(*parts: int) -> np.random.Generator:
    """PCG64 generator for the given key tuple."""
    return np.random.default_rng(np.random.SeedSequence(_key(parts)))


def kernel_seed(*parts: int) -> int:
    """64-bit state for the in-kernel splitmix64 generator."""
    return int(np.random.SeedSequence(_key(parts)).generate_state(1, np.uint64)[0])


@njit(cache=True, nogil=True, inline="always")
def mix64(state):
    """Advance a 1-element uint64 state array and return the next draw."""
    state[0] = state[0] + np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True, inline="always")
def rand_below(state, n):
    """Uniform integer in [0, n); bias is below 2**-53 per draw."""
    u = mix64(state) >> np.uint64(11)
    return np.int64(np.float64(u) * (1.0 / 9007199254740992.0) * n)
