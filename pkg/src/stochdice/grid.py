"""Time discretization shared by the rate model and the climate-economy model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing time nodes, in years since ``start_year``.

    Node ``i`` sits at calendar year ``start_year + times[i]``. Flow
    quantities (abatement, costs, utility) live on the ``n_steps`` left
    nodes of the steps; stock quantities live on all ``n_steps + 1`` nodes.
    """

    times: np.ndarray
    start_year: float = 2015.0

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if not np.all(np.diff(times) > 0.0):
            raise ValueError("time grid nodes must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, horizon: float = 500.0, step: float = 1.0, start_year: float = 2015.0) -> "TimeGrid":
        n = int(round(horizon / step))
        if n < 1 or not np.isclose(n * step, horizon):
            raise ValueError(f"horizon {horizon} is not a multiple of step {step}")
        return cls(np.arange(n + 1) * step, start_year)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def years(self) -> np.ndarray:
        return self.start_year + self.times

    @property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.steps, self.steps[0]))

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of the node at time ``t``; raises if ``t`` is off-grid."""
        i = int(np.searchsorted(self.times, t - tol))
        if i >= self.times.size or abs(self.times[i] - t) > tol:
            raise ValueError(f"time {t} is not a grid node")
        return i

    def nearest_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, TimeGrid)
            and self.start_year == other.start_year
            and np.array_equal(self.times, other.times)
        )

    def __hash__(self) -> int:
        return hash((self.start_year, self.times.tobytes()))

    def __len__(self) -> int:
        return self.times.size
