"""ADAM ascent on expected discounted welfare.

The Brownian increments are fixed for the whole run, so the Monte Carlo
objective is a deterministic smooth function of the policy parameters.
Bounds are enforced by projection after every step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .model import DiceModel
from .policy import Strategy


@dataclass(frozen=True)
class AdamConfig:
    """ADAM hyperparameters.

    The step of parameter ``j`` is ``learning_rate * scale_j``, where the
    scale comes from the policy (100 for a time in years, so its step is
    1 year). ``decay`` shrinks the learning rate as ``1 / (1 + decay k)``.
    Iteration stops when the projected gradient norm falls below
    ``grad_tol`` times its initial value.
    """

    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iter: int = 2000
    grad_tol: float = 1e-6
    decay: float = 0.0
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("ADAM betas must lie in (0, 1)")
        if self.learning_rate <= 0.0 or self.max_iter < 1:
            raise ValueError("learning rate and iteration budget must be positive")


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    gradient: np.ndarray
    grad_norm: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    names: tuple = ()
    strategy: Strategy | None = None

    def write_trace(self, path: str | Path) -> None:
        """Iteration trace CSV: iteration, parameters, objective, gradient norm."""
        names = self.names or tuple(f"x{j}" for j in range(self.x.size))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("iteration", *names, "objective", "grad_norm"))
            for it, x, val, gn in self.trace:
                w.writerow((it, *(repr(float(v)) for v in x), repr(float(val)), repr(float(gn))))


def _projected_gradient(x, g, lower, upper):
    g = g.copy()
    g[(x <= lower) & (g < 0.0)] = 0.0
    g[(x >= upper) & (g > 0.0)] = 0.0
    return g


def adam(value_and_grad: Callable, x0, config: AdamConfig = AdamConfig(), scales=None,
         lower=None, upper=None, maximize: bool = True) -> OptimizeResult:
    """Projected ADAM on ``value_and_grad(x) -> (f, grad)``.

    Returns the best iterate seen. ``converged`` is False when the
    iteration budget ran out before the gradient tolerance was met.
    """
    x = np.array(x0, dtype=float)
    sign = 1.0 if maximize else -1.0
    scales = np.ones_like(x) if scales is None else np.asarray(scales, dtype=float)
    lower = np.full_like(x, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full_like(x, np.inf) if upper is None else np.asarray(upper, dtype=float)
    x = np.clip(x, lower, upper)

    m = np.zeros_like(x)
    v = np.zeros_like(x)
    trace = []
    best = None
    g0 = None
    converged = False
    k = 0
    for k in range(config.max_iter + 1):
        f, g = value_and_grad(x)
        g = np.asarray(g, dtype=float)
        pg = _projected_gradient(x, sign * g, lower, upper)
        gn = float(np.linalg.norm(pg))
        trace.append((k, x.copy(), float(f), gn))
        if best is None or sign * f > sign * best[1]:
            best = (x.copy(), float(f), g.copy(), gn)
        if g0 is None:
            g0 = gn
        if gn <= config.grad_tol * g0 or gn == 0.0:
            converged = True
            best = (x.copy(), float(f), g.copy(), gn)
            break
        if k == config.max_iter:
            break
        m = config.beta1 * m + (1.0 - config.beta1) * pg
        v = config.beta2 * v + (1.0 - config.beta2) * pg * pg
        m_hat = m / (1.0 - config.beta1 ** (k + 1))
        v_hat = v / (1.0 - config.beta2 ** (k + 1))
        lr = config.learning_rate / (1.0 + config.decay * k)
        x = np.clip(x + lr * scales * m_hat / (np.sqrt(v_hat) + config.eps), lower, upper)

    bx, bf, bg, bgn = best
    return OptimizeResult(bx, bf, bg, bgn, k, converged, trace)


def evaluate_objective(model: DiceModel, strategy: Strategy, theta=None) -> float:
    """Expected discounted welfare ``E[sum_i V_i N(0)/N(t_i) dt_i]``."""
    f, _ = model.objective(strategy)
    return f(strategy.parameters() if theta is None else theta)


def optimize(model: DiceModel, strategy: Strategy, config: AdamConfig = AdamConfig()) -> OptimizeResult:
    """Maximize expected welfare over the free parameters of ``strategy``."""
    _, fg = model.objective(strategy)
    lo, hi = strategy.bounds()
    lo = lo if config.lower is None else np.maximum(lo, config.lower)
    hi = hi if config.upper is None else np.minimum(hi, config.upper)
    result = adam(fg, strategy.parameters(), config, strategy.scales(), lo, hi)
    result.names = strategy.names
    result.strategy = strategy.with_parameters(result.x)
    return result
