"""Monte Carlo random variables represented as vectors of per-path values.

A :class:`PathVector` holding a single value is a *deterministic* random
variable. It broadcasts against vectors of any length, so deterministic
sub-computations never materialize per-path copies (scalar compression).
"""

from __future__ import annotations

from dataclasses import dataclass
from numbers import Real

import numpy as np

from .grid import TimeGrid

DEFAULT_PATHS = 10_000
CI_PATHS = 2_000


class PathVector:
    """Immutable realization of a random variable on ``n_paths`` paths.

    Parameters
    ----------
    values : float or array_like
        A scalar (deterministic value) or a 1-d array of per-path values.
        Arrays of length one are compressed to scalars.
    """

    __slots__ = ("_values",)
    __array_priority__ = 100

    def __init__(self, values):
        if isinstance(values, PathVector):
            values = values._values
        arr = np.array(values, dtype=float)
        if arr.ndim > 1:
            raise ValueError("PathVector values must be scalar or 1-d")
        if arr.ndim == 1 and arr.size == 0:
            raise ValueError("PathVector needs at least one path")
        if arr.ndim == 1 and arr.size == 1:
            arr = arr.reshape(())
        arr.setflags(write=False)
        self._values = arr

    @classmethod
    def constant(cls, value: float) -> "PathVector":
        return cls(float(value))

    @property
    def is_deterministic(self) -> bool:
        return self._values.ndim == 0

    @property
    def n_paths(self) -> int:
        """Number of stored paths; 1 for a compressed constant."""
        return 1 if self.is_deterministic else self._values.size

    @property
    def values(self) -> np.ndarray:
        return self._values

    def expand(self, n_paths: int) -> np.ndarray:
        if not self.is_deterministic and self._values.size != n_paths:
            raise ValueError(f"cannot expand {self._values.size} paths to {n_paths}")
        return np.broadcast_to(self._values, (n_paths,)).copy()

    def expectation(self) -> float:
        return expectation(self)

    def quantile(self, level: float) -> float:
        return quantile(self, level)

    def standard_error(self) -> float:
        if self.is_deterministic:
            return 0.0
        return float(np.std(self._values, ddof=1) / np.sqrt(self._values.size))

    def apply(self, fn) -> "PathVector":
        return PathVector(fn(self._values))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._values, dtype=dtype)

    def _binary(self, other, op):
        other = other._values if isinstance(other, PathVector) else other
        return PathVector(op(self._values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __radd__(self, other):
        return self._binary(other, lambda a, b: np.add(b, a))

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: np.subtract(b, a))

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    def __rmul__(self, other):
        return self._binary(other, lambda a, b: np.multiply(b, a))

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __rtruediv__(self, other):
        return self._binary(other, lambda a, b: np.divide(b, a))

    def __pow__(self, other):
        return self._binary(other, np.power)

    def __neg__(self):
        return PathVector(-self._values)

    def __len__(self) -> int:
        return self.n_paths

    def __repr__(self) -> str:
        if self.is_deterministic:
            return f"PathVector({float(self._values)!r})"
        return f"PathVector(n_paths={self._values.size}, mean={self.expectation():.6g})"


def _as_array(x) -> np.ndarray:
    if isinstance(x, PathVector):
        return x.values
    if isinstance(x, Real):
        return np.asarray(float(x))
    return np.asarray(x, dtype=float)


def expectation(x) -> float:
    """Equal-weight mean over paths.

    ``numpy.sum`` reduces contiguous float arrays pairwise, which fixes the
    summation order and keeps the result reproducible.
    """
    arr = _as_array(x)
    if arr.size == 0:
        raise ValueError("expectation of an empty vector")
    if arr.ndim == 0:
        return float(arr)
    return float(np.sum(arr) / arr.size)


def quantile(x, level: float) -> float:
    """Order-statistic quantile with linear interpolation (type 7)."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {level}")
    arr = _as_array(x)
    if arr.size == 0:
        raise ValueError("quantile of an empty vector")
    if arr.ndim == 0:
        return float(arr)
    return float(np.quantile(arr, level, method="linear"))


@dataclass(frozen=True)
class BrownianDriver:
    """Source of Brownian increments on a time grid.

    Increments for step ``i`` are normal with variance ``grid.steps[i]``.
    ``n_factors`` independent increments are drawn per step and path.
    """

    seed: int
    n_paths: int
    grid: TimeGrid
    n_factors: int = 1

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")
        if self.n_factors < 1:
            raise ValueError("n_factors must be positive")

    def increments(self) -> np.ndarray:
        return generate_increments(self)


def generate_increments(driver: BrownianDriver) -> np.ndarray:
    """Brownian increments of shape ``(n_steps, n_factors, n_paths)``.

    Deterministic in ``(seed, n_paths, grid, n_factors)``: a single
    PCG64 stream is consumed in a fixed order.
    """
    rng = np.random.Generator(np.random.PCG64(driver.seed))
    shape = (driver.grid.n_steps, driver.n_factors, driver.n_paths)
    z = rng.standard_normal(shape)
    return z * np.sqrt(driver.grid.steps)[:, None, None]
