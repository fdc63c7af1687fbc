"""Seeded random streams.

Backed by numpy's Philox counter-based bit generator, which produces the same
sequence on every platform for a given seed and call sequence.
"""
from __future__ import annotations

import zlib

import numpy as np

from ..errors import InvalidArgument


class Rng:
    algorithm = "philox4x64"

    def __init__(self, seed: int = 0, _key: tuple = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._key = tuple(_key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self._key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, name: str) -> "Rng":
        """Independent stream derived from this seed and a stable name."""
        return Rng(self.seed, self._key + (zlib.crc32(name.encode()),))

    @property
    def position(self) -> dict:
        return self._gen.bit_generator.state["state"]

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(_check_shape(shape))

    def uniform(self, shape, low=0.0, high=1.0) -> np.ndarray:
        return self._gen.uniform(low, high, _check_shape(shape))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def orthogonal(self, n: int) -> np.ndarray:
        """Haar-random orthogonal matrix."""
        q, r = np.linalg.qr(self.normal((n, n)))
        return q * np.sign(np.diag(r))


def _check_shape(shape) -> tuple:
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    if len(shape) == 0 or any(int(s) < 1 for s in shape):
        raise InvalidArgument(f"shape must be a non-empty list of positive extents, got {shape}")
    return shape


def randn(shape, rng: Rng):
    """Tensor of i.i.d. standard-normal samples."""
    from .tensor import Tensor

    return Tensor(rng.normal(shape))
