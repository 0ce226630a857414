"""Counter-based random streams keyed by ``(seed, sample index)``.

Every sample index owns an independent stream, so results never depend on
how samples are batched or scheduled across workers.

Two flavours are provided:

* :class:`CounterRNG` -- vectorised SplitMix64.  Draw ``t`` of stream ``i`` is
  ``mix(key_i + (t + 1) * GAMMA)`` where ``key_i`` is itself a mixed function
  of ``(seed, i)``.  The mixer is a bijection of 64-bit words and ``GAMMA`` is
  odd, so each stream has period 2**64.  Whole batches are drawn with numpy
  array arithmetic, which is what the walk simulator needs.
* :func:`stream` -- a numpy ``Generator`` over Philox keyed by
  ``(seed, index)``, for per-trajectory work that needs non-uniform samplers
  (negative binomial, multinomial).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = np.uint64(0x9E3779B97F4A7C15)
KEY_GAMMA = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / (1 << 53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def seed_word(seed: int) -> np.uint64:
    return np.uint64(int(seed) & MASK64)


class CounterRNG:
    """Vectorised per-index uniform streams."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        with np.errstate(over="ignore"):
            self._base = _mix(np.array([self.seed], dtype=np.uint64) + GAMMA)[0]

    def keys(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.uint64)
        with np.errstate(over="ignore"):
            return _mix(self._base + (idx + np.uint64(1)) * KEY_GAMMA)

    def bits(self, keys: np.ndarray, counter) -> np.ndarray:
        ctr = np.asarray(counter, dtype=np.uint64)
        with np.errstate(over="ignore"):
            return _mix(keys + (ctr + np.uint64(1)) * GAMMA)

    def uniform(self, keys: np.ndarray, counter) -> np.ndarray:
        """Doubles in ``[0, 1)`` from the top 53 bits of each draw."""
        return (self.bits(keys, counter) >> _S11).astype(np.float64) * _INV53


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent numpy generator for sample ``index`` under ``seed``."""
    key = np.array([int(seed) & MASK64, int(index) & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
