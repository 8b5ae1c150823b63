"""Counter-based random numbers.

Every random number is a pure function of (seed, pixel, sample, bounce,
dimension), so results do not depend on evaluation order or thread count.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV_2_53 = 1.0 / 9007199254740992.0

CAMERA_BOUNCE = 0xFFFF  # bounce slot reserved for pixel jitter


@njit(cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def hash_u01(seed, pixel, sample, bounce, dim):
    """Uniform double in [0, 1) keyed by the five counters."""
    h = mix64(seed + _GOLDEN)
    h = mix64(h ^ (np.uint64(pixel) + _GOLDEN))
    h = mix64(h ^ (np.uint64(sample) + _GOLDEN))
    h = mix64(h ^ ((np.uint64(bounce) << np.uint64(8)) + np.uint64(dim) + _GOLDEN))
    return np.float64(h >> _S11) * _INV_2_53


def seed_to_u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
