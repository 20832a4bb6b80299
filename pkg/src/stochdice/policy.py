"""Abatement and savings policies evaluated on the grid, per path.

A policy is an immutable description plus a flat vector of free
parameters. ``evaluate(theta, times, rate)`` is written with
``jax.numpy`` so the optimizer can differentiate through it. Clamps use
``jnp.where`` so the derivative at a kink is the one-sided value 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

import jax
import jax.numpy as jnp
import numpy as np

MU0 = 0.03


def _clamp_unit(raw):
    """Clamp to [0, 1] with zero derivative on and beyond both bounds."""
    capped = jnp.where(raw < 1.0, raw, 1.0)
    return jnp.where(capped > 0.0, capped, 0.0)


def eval_one_param(t, mu0: float, time_to_full):
    """``min(mu0 + (1 - mu0) t / T, 1)``: linear ramp reaching full abatement at ``T``."""
    if not isinstance(time_to_full, jax.core.Tracer) and not float(time_to_full) > 0.0:
        raise ValueError("time to full abatement must be positive")
    raw = mu0 + (1.0 - mu0) / time_to_full * t
    return jnp.where(raw < 1.0, raw, 1.0)


def eval_linear_stochastic(t, rate, mu0: float, a0, a1):
    """``min(mu0 + (a0 + a1 rho) t, 1)`` pathwise, floored at zero."""
    return _clamp_unit(mu0 + (a0 + a1 * rate) * t)


@dataclass(frozen=True)
class OneParam:
    """Deterministic ramp parametrized by the time to 100% abatement (years)."""

    time_to_full: float = 100.0
    mu0: float = MU0
    stochastic = False
    names = ("time_to_full",)

    def parameters(self) -> np.ndarray:
        return np.array([self.time_to_full], dtype=float)

    def with_parameters(self, values) -> "OneParam":
        return replace(self, time_to_full=float(np.asarray(values)[0]))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([1.0]), np.array([500.0])

    def scales(self) -> np.ndarray:
        return np.array([100.0])

    def evaluate(self, theta, times, rate=None):
        return eval_one_param(jnp.asarray(times)[:, None], self.mu0, theta[0])


@dataclass(frozen=True)
class LinearStochastic:
    """Abatement speed linear in the current rate level; ``mu0`` is pinned."""

    a0: float = 0.0097
    a1: float = 0.0
    mu0: float = MU0
    stochastic = True
    names = ("a0", "a1")

    def parameters(self) -> np.ndarray:
        return np.array([self.a0, self.a1], dtype=float)

    def with_parameters(self, values) -> "LinearStochastic":
        v = np.asarray(values, dtype=float)
        return replace(self, a0=float(v[0]), a1=float(v[1]))

    def bounds(self):
        return np.array([0.0, -100.0]), np.array([1.0, 100.0])

    def scales(self) -> np.ndarray:
        return np.array([0.01, 1.0])

    def evaluate(self, theta, times, rate):
        t = jnp.asarray(times)[:, None]
        return eval_linear_stochastic(t, rate, self.mu0, theta[0], theta[1])

    @classmethod
    def matching(cls, one: OneParam) -> "LinearStochastic":
        """The ``a1 = 0`` member that coincides with ``one``."""
        return cls(a0=(1.0 - one.mu0) / one.time_to_full, a1=0.0, mu0=one.mu0)


@dataclass(frozen=True, eq=False)
class Piecewise:
    """Free abatement rate on every flow node after the first."""

    values: np.ndarray
    mu0: float = MU0
    stochastic = False

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        return isinstance(other, Piecewise) and self.mu0 == other.mu0 and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.mu0, self.values.tobytes()))

    @classmethod
    def from_policy(cls, policy, times) -> "Piecewise":
        mu = np.asarray(policy.evaluate(jnp.asarray(policy.parameters()), times, jnp.zeros((1, 1))))
        return cls(mu[1:, 0], mu0=float(mu[0, 0]))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f"mu[{i + 1}]" for i in range(self.values.size))

    def parameters(self) -> np.ndarray:
        return self.values.copy()

    def with_parameters(self, values) -> "Piecewise":
        return Piecewise(values, self.mu0)

    def bounds(self):
        n = self.values.size
        return np.zeros(n), np.ones(n)

    def scales(self) -> np.ndarray:
        return np.ones(self.values.size)

    def evaluate(self, theta, times, rate=None):
        if len(times) != theta.shape[0] + 1:
            raise ValueError(f"{theta.shape[0]} piecewise values do not fit {len(times)} flow nodes")
        mu = jnp.concatenate((jnp.array([self.mu0]), _clamp_unit(theta)))
        return mu[:, None]


AbatementPolicy = Union[Piecewise, OneParam, LinearStochastic]


@dataclass(frozen=True)
class ConstantSavings:
    rate: float = 0.2582781456953642
    optimize: bool = False

    @property
    def names(self) -> tuple[str, ...]:
        return ("savings",) if self.optimize else ()

    def parameters(self) -> np.ndarray:
        return np.array([self.rate]) if self.optimize else np.empty(0)

    def with_parameters(self, values) -> "ConstantSavings":
        return replace(self, rate=float(values[0])) if self.optimize else self

    def bounds(self):
        k = 1 if self.optimize else 0
        return np.zeros(k), np.full(k, 0.99)

    def scales(self) -> np.ndarray:
        return np.ones(1 if self.optimize else 0)

    def evaluate(self, theta, times):
        s = theta[0] if self.optimize else self.rate
        return jnp.full((len(times), 1), 1.0) * s


@dataclass(frozen=True, eq=False)
class PiecewiseSavings:
    values: np.ndarray
    optimize: bool = True

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        return (isinstance(other, PiecewiseSavings) and self.optimize == other.optimize
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.optimize, self.values.tobytes()))

    @property
    def names(self):
        return tuple(f"s[{i}]" for i in range(self.values.size)) if self.optimize else ()

    def parameters(self):
        return self.values.copy() if self.optimize else np.empty(0)

    def with_parameters(self, values):
        return PiecewiseSavings(values, self.optimize) if self.optimize else self

    def bounds(self):
        k = self.values.size if self.optimize else 0
        return np.zeros(k), np.full(k, 0.99)

    def scales(self):
        return np.ones(self.values.size if self.optimize else 0)

    def evaluate(self, theta, times):
        s = theta if self.optimize else jnp.asarray(self.values)
        if s.shape[0] != len(times):
            raise ValueError("piecewise savings length does not match the grid")
        return s[:, None]


SavingsPolicy = Union[ConstantSavings, PiecewiseSavings]


@dataclass(frozen=True)
class Strategy:
    """An abatement policy plus a savings policy, with one flat parameter vector."""

    abatement: AbatementPolicy
    savings: SavingsPolicy = field(default_factory=ConstantSavings)

    @property
    def stochastic(self) -> bool:
        return self.abatement.stochastic

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.abatement.names) + tuple(self.savings.names)

    def _split(self, theta):
        k = len(self.abatement.parameters())
        return theta[:k], theta[k:]

    def parameters(self) -> np.ndarray:
        return np.concatenate((self.abatement.parameters(), self.savings.parameters()))

    def with_parameters(self, values) -> "Strategy":
        a, s = self._split(np.asarray(values, dtype=float))
        return Strategy(self.abatement.with_parameters(a), self.savings.with_parameters(s))

    def bounds(self):
        (la, ha), (ls, hs) = self.abatement.bounds(), self.savings.bounds()
        return np.concatenate((la, ls)), np.concatenate((ha, hs))

    def scales(self) -> np.ndarray:
        return np.concatenate((self.abatement.scales(), self.savings.scales()))

    def evaluate(self, theta, times, rate):
        """Abatement ``(n, paths or 1)`` and savings ``(n, 1)`` on the flow nodes."""
        a, s = self._split(theta)
        return self.abatement.evaluate(a, times, rate), self.savings.evaluate(s, times)


def policy_gradient_parameters(policy) -> list[float]:
    """Free parameters in optimizer order."""
    return [float(v) for v in policy.parameters()]


def set_policy_parameters(policy, values):
    """Inverse of :func:`policy_gradient_parameters`."""
    values = np.asarray(values, dtype=float)
    if values.size != len(policy.parameters()):
        raise ValueError(f"expected {len(policy.parameters())} parameters, got {values.size}")
    return policy.with_parameters(values)
