"""Counter-based deterministic random number generation.

Every random draw in the project flows through :class:`CounterRng`, a
splittable counter generator: sample ``i`` of a stream is a pure function of
``(seed, i)``, so identical seeds reproduce identical sample streams
bit-for-bit on a platform regardless of draw batching. Gaussians come from
Box-Muller over the uniform stream.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer: bijective avalanche on uint64 words."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def fnv1a64(data: str | bytes) -> int:
    """64-bit FNV-1a hash, used for token hashing and stream labels."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    with np.errstate(over="ignore"):
        for byte in data:
            h = (h ^ np.uint64(byte)) * _FNV_PRIME
    return int(h)


class CounterRng:
    """Deterministic counter-based generator (SplitMix64 + Box-Muller).

    The raw word at counter ``i`` is ``mix64(seed + i * golden)``; drawing n
    values advances the counter by n, so the stream is independent of how
    draws are chunked.
    """

    algorithm = "splitmix64-counter/box-muller"

    def __init__(self, seed: int):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self.counter = 0

    def derive(self, label: str) -> "CounterRng":
        """Independent child stream named by ``label``."""
        child = int(_mix64(self.seed ^ np.uint64(fnv1a64(label))))
        return CounterRng(child)

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix64(self.seed + idx * _GOLDEN)

    def uniform(self, shape: tuple[int, ...] = (), dtype=np.float64) -> np.ndarray:
        """Uniform samples in [0, 1) with 53-bit resolution."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return u.reshape(shape).astype(dtype, copy=False)

    def normal(self, shape: tuple[int, ...] = (), dtype=np.float64) -> np.ndarray:
        """Standard normal samples via Box-Muller."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        half = (n + 1) // 2
        # u1 in (0, 1] so the log is finite.
        u1 = ((self._raw(half) >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)
        u2 = (self._raw(half) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape).astype(dtype, copy=False)

    def randint(self, low: int, high: int, shape: tuple[int, ...] = ()) -> np.ndarray | int:
        """Integers in [low, high). Scalar when shape is ()."""
        if high <= low:
            raise ValueError(f"randint: empty range [{low}, {high})")
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        span = np.uint64(high - low)
        vals = (self._raw(n) % span).astype(np.int64) + low
        if shape == ():
            return int(vals[0])
        return vals.reshape(shape)
