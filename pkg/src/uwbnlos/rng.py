"""Portable counter-based random numbers.

Every stream is SplitMix64 evaluated at explicit counters: the ``k``-th raw
output of a stream with key ``K`` is ``mix(K + k * 0x9E3779B97F4A7C15)`` for
``k = 1, 2, ...`` (all arithmetic modulo 2**64), where ``mix`` is the
SplitMix64 finalizer. Because the output depends only on ``(key, counter)``
the streams are identical on every platform and can be split into
independent substreams without shared state.

Derived quantities:

* uniform ``[0, 1)``: ``(raw >> 11) * 2**-53``
* normal: Box-Muller on two consecutive uniforms ``u1, u2`` using
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``; the sine branch is discarded
* substream ``i`` of key ``K``: key ``mix(K ^ mix((i + 1) * GOLDEN))``
"""

from __future__ import annotations

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python integer."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class Rng:
    """A SplitMix64 stream with an explicit position.

    Args:
        seed: Any integer; reduced modulo 2**64 to form the stream key.
    """

    def __init__(self, seed: int):
        self.key = int(seed) & _MASK
        self.counter = 0

    def substream(self, index: int) -> "Rng":
        """Independent child stream; does not advance this stream."""
        child = Rng(0)
        child.key = mix64(self.key ^ mix64(((int(index) + 1) * GOLDEN) & _MASK))
        return child

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs as ``uint64``."""
        counters = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.key) + counters * np.uint64(GOLDEN)
            return _mix_array(z)

    def uniform(self, n: int | None = None, low: float = 0.0, high: float = 1.0):
        """Uniform draws on ``[low, high)``; a float when ``n`` is None."""
        m = 1 if n is None else n
        u = (self.raw(m) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        out = low + (high - low) * u
        return float(out[0]) if n is None else out

    def normal(self, n: int | None = None, mean: float = 0.0, std: float = 1.0):
        """Gaussian draws via Box-Muller; a float when ``n`` is None."""
        m = 1 if n is None else n
        u = self.uniform(2 * m)
        u1, u2 = u[0::2], u[1::2]
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        out = mean + std * z
        return float(out[0]) if n is None else out

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of ``range(n)`` (stable argsort of raw draws)."""
        return np.argsort(self.raw(n), kind="stable")
