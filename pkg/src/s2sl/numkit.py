"""Dense matrix helpers and seeded random streams.

Matrices are plain 2-D ``numpy.float64`` arrays in C (row-major) order.
Randomness goes through :class:`RngStream`, a thin wrapper over numpy's
PCG64 bit generator. PCG64 output for a given seed is fixed by numpy and
identical across platforms, which is what fold plans, shuffles and weight
initialisation rely on.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

import numpy as np

T = TypeVar("T")


class ShapeError(ValueError):
    """Raised when array shapes are incompatible."""


def as_matrix(values, *, name: str = "matrix") -> np.ndarray:
    """Return ``values`` as a C-contiguous float64 2-D array."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def as_vector(values, *, name: str = "vector") -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = as_matrix(a, name="a")
    b = as_matrix(b, name="b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


class RngStream:
    """Deterministic random stream (numpy PCG64 seeded from a 64-bit integer).

    Child streams for concurrent work items are derived with :meth:`child`,
    which hashes ``(seed, index)`` through numpy's ``SeedSequence`` so that
    siblings are statistically independent and reproducible.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._key = tuple(_key)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *self._key])))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self._key})"

    def child(self, index: int) -> "RngStream":
        """Independent stream for work item ``index``; does not advance ``self``."""
        return RngStream(self.seed, (*self._key, int(index)))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def gaussian(self, mean: float, stddev: float, size) -> np.ndarray:
        if stddev < 0:
            raise ValueError(f"stddev must be >= 0, got {stddev}")
        # numpy's ziggurat sampler; stddev == 0 yields exactly `mean`
        return mean + stddev * self._gen.standard_normal(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)`` in random order."""
        return self._gen.choice(n, size=k, replace=False)


def gaussian_sample(rng: RngStream, mean: float, stddev: float, n: int) -> list[float]:
    """Draw ``n`` values from Normal(mean, stddev**2)."""
    return rng.gaussian(mean, stddev, int(n)).tolist()


def seeded_shuffle(rng: RngStream, items: Sequence[T]) -> list[T]:
    """Return a shuffled copy of ``items`` (Fisher-Yates via numpy)."""
    items = list(items)
    order = rng.permutation(len(items))
    return [items[i] for i in order]
