"""Monte Carlo simulation of the coupled model as a checkpointed scan.

:class:`DiceModel` binds a grid, DICE parameters, a simulated rate path and
the financing extensions. The time loop is a ``lax.scan`` over blocks of
steps, each block wrapped in ``jax.checkpoint`` so that reverse-mode
memory grows with the number of blocks instead of the number of steps.
Funded abatement is carried in a ring buffer indexed by the node offset
of future repayments.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from .core import Compensation, Exogenous, ModelState, StepInputs, exogenous_schedules, euler_step, gross_output
from .extensions import CompensatorConfig, FundingConfig, FundingSchedule, funding_schedule
from .grid import TimeGrid
from .montecarlo import PathVector
from .params import DiceParams
from .policy import Strategy
from .rates import HullWhiteParams, RatePath, simulate_rate

FLOW_FIELDS = (
    "gross_output", "damage_gross", "damage", "abatement_instant", "abatement", "output",
    "consumption", "consumption_pc", "utility", "emissions", "industrial_emissions",
)
STATE_FIELDS = ModelState._fields
PATH_KEYS = ("mu", "savings", "cost", "emission", "consumption", "discount", "numeraire", "rho", "ygross")


class KernelSpec(NamedTuple):
    """Static (hashable) configuration of a compiled simulation."""

    params: DiceParams
    comp: Compensation
    n_tranches: int
    max_offset: int
    spread: float
    block: int
    collect: tuple[str, ...]
    frozen_output: bool


def _pad_rows(x, total):
    """Pad the leading axis to ``total`` rows by repeating the last row."""
    n = x.shape[0]
    if n == total:
        return x
    tail = jnp.repeat(x[-1:], total - n, axis=0)
    return jnp.concatenate((x, tail), axis=0)


def run_kernel(spec: KernelSpec, mu, savings, data, shocks=None, ygross=None):
    """Simulate all paths; returns per-path welfare, floor hits and collected flows.

    ``mu`` and ``savings`` have shape ``(n, 1 or paths)``. ``data`` holds the
    per-node arrays built by :meth:`DiceModel.data`. ``shocks`` optionally
    adds ``cost``, ``emission`` and ``consumption`` perturbations of shape
    ``(n, 1 or paths)``; ``ygross`` freezes gross output.
    """
    p = spec.params
    n = data["dt"].shape[0]
    shocks = shocks or {}
    zero = jnp.zeros((n, 1))
    xs = {
        "mu": mu,
        "savings": savings,
        "cost": shocks.get("cost", zero),
        "emission": shocks.get("emission", zero),
        "consumption": shocks.get("consumption", zero),
        "valid": jnp.ones(n),
        **{k: v for k, v in data.items() if k != "times"},
    }
    if spec.frozen_output:
        xs["ygross"] = ygross

    n_paths = max(jnp.shape(xs[k])[1] for k in PATH_KEYS if k in xs)
    block = max(1, min(spec.block, n))
    n_blocks = -(-n // block)
    total = n_blocks * block
    xs = {k: _pad_rows(jnp.asarray(v), total) for k, v in xs.items()}
    xs["valid"] = xs["valid"].at[n:].set(0.0)
    xs = {k: v.reshape((n_blocks, block) + v.shape[1:]) for k, v in xs.items()}

    def step(carry, x):
        state, buf, welfare, floored = carry
        inputs = StepInputs(
            mu=x["mu"], savings=x["savings"], dt=x["dt"], tau=x["tau"],
            population=x["population"], tfp=x["tfp"], intensity=x["intensity"],
            land_emissions=x["land"], abatement_coefficient=x["coeff"],
            forcing_other_next=x["forcing_next"], discount=x["discount"],
            numeraire=x["numeraire"], cost_shock=x["cost"], emission_shock=x["emission"],
            consumption_shock=x["consumption"],
        )
        yg = x["ygross"] if spec.frozen_output else gross_output(state, inputs, p)
        inputs = inputs._replace(ygross=yg)
        if spec.n_tranches:
            c_mu = yg * x["coeff"] * jnp.power(x["mu"], p.abatement_exponent)
            inv_bond = jnp.exp(x["fund_b"][:, None] * x["rho"][None, :] - x["fund_log_a"][:, None])
            amounts = x["fund_weight"][:, None] * (inv_bond + spec.spread * x["fund_tau"][:, None]) * c_mu
            buf = buf.at[x["fund_offset"]].add(jnp.broadcast_to(amounts, (spec.n_tranches, buf.shape[1])))
            inputs = inputs._replace(funded_abatement=buf[0])
        new_state, out = euler_step(state, inputs, p, spec.comp)
        v = x["valid"]
        keep = lambda new, old: jnp.where(v > 0.0, new, old)
        new_state = ModelState(*(keep(a, b) for a, b in zip(new_state, state)))
        if spec.n_tranches:
            shifted = jnp.concatenate((buf[1:], jnp.zeros((1, buf.shape[1]))), axis=0)
            buf = keep(shifted, buf)
        welfare = welfare + v * out.utility * x["discount"] * x["dt"]
        floored = floored + v * out.floored
        rec = {}
        for name in spec.collect:
            if name in STATE_FIELDS:
                rec[name] = jnp.broadcast_to(getattr(state, name), welfare.shape)
            else:
                rec[name] = jnp.broadcast_to(getattr(out, name), welfare.shape)
        return (new_state, buf, welfare, floored), rec

    @jax.checkpoint
    def run_block(carry, xb):
        return jax.lax.scan(step, carry, xb)

    init = ModelState.initial(p, n_paths)
    buf = jnp.zeros((spec.max_offset + 1, n_paths)) if spec.n_tranches else jnp.zeros((1, 1))
    carry = (init, buf, jnp.zeros(n_paths), jnp.zeros(n_paths))
    (final, _, welfare, floored), rec = jax.lax.scan(run_block, carry, xs)
    rec = {k: v.reshape((total,) + v.shape[2:])[:n] for k, v in rec.items()}
    return welfare, floored, rec, final


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Simulated flows on the ``n`` flow nodes and stocks on all ``n + 1`` nodes.

    Every array has one column per path (a single column when the run is
    deterministic).
    """

    grid: TimeGrid
    flows: dict
    states: dict
    welfare_paths: np.ndarray
    rates: RatePath
    mu: np.ndarray
    savings: np.ndarray
    floored: int = 0
    truncated_tranches: int = 0

    @property
    def n_paths(self) -> int:
        return self.welfare_paths.shape[0]

    @property
    def welfare(self) -> float:
        return float(np.sum(self.welfare_paths) / self.welfare_paths.size)

    @property
    def cost(self) -> np.ndarray:
        """Total cost ``C = C_A + C_D`` per flow node and path."""
        return self.flows["abatement"] + self.flows["damage"]

    @property
    def gdp(self) -> np.ndarray:
        return self.flows["gross_output"]

    @property
    def discount(self) -> np.ndarray:
        n = self.grid.n_steps
        return self.rates.numeraire[0] / self.rates.numeraire[:n]

    def __getitem__(self, name: str) -> np.ndarray:
        if name in self.flows:
            return self.flows[name]
        if name in self.states:
            return self.states[name]
        if name == "cost":
            return self.cost
        if name == "mu":
            return np.broadcast_to(self.mu, self.cost.shape)
        raise KeyError(name)

    def at(self, name: str, i: int) -> PathVector:
        return PathVector(self[name][i])


def deterministic_rates(grid: TimeGrid, rate: float) -> RatePath:
    """Flat deterministic time preference, ``N(t) = exp(rate * t)``."""
    return simulate_rate(HullWhiteParams.constant(grid, rate, 0.0, 0.0, 0.0))


@dataclass(frozen=True, eq=False)
class DiceModel:
    """DICE dynamics driven by a fixed rate path and financing configuration."""

    grid: TimeGrid
    params: DiceParams
    rates: RatePath
    hull_white: HullWhiteParams | None = None
    funding: FundingConfig = field(default_factory=FundingConfig)
    compensator: CompensatorConfig = field(default_factory=CompensatorConfig.off)
    block: int = 25

    def __post_init__(self) -> None:
        if self.rates.grid != self.grid:
            raise ValueError("rate path and model use different grids")
        if self.funding.enabled and self.hull_white is None:
            raise ValueError("funding needs the rate model for bond prices")
        exog = exogenous_schedules(self.grid, self.params)
        object.__setattr__(self, "exogenous", exog)
        sched = funding_schedule(self.funding, self.hull_white) if self.funding.enabled else None
        object.__setattr__(self, "schedule", sched)
        object.__setattr__(self, "_data", self._build_data())

    @classmethod
    def deterministic(cls, params: DiceParams | None = None, grid: TimeGrid | None = None, **kw) -> "DiceModel":
        params = params or DiceParams.dice2016()
        grid = grid or TimeGrid.uniform()
        rates = deterministic_rates(grid, params.time_preference)
        hw = HullWhiteParams.constant(grid, params.time_preference, 0.0, 0.0, 0.0)
        return cls(grid, params, rates, hull_white=hw, **kw)

    @property
    def n_paths(self) -> int:
        return self.rates.n_paths

    def _build_data(self) -> dict:
        g, e = self.grid, self.exogenous
        n = g.n_steps
        num = self.rates.numeraire
        data = {
            "dt": g.steps,
            "times": g.times[:n] - g.times[0],
            "tau": g.times[:n] - g.times[0],
            "population": e.population[:n],
            "tfp": e.tfp[:n],
            "intensity": e.intensity[:n],
            "land": e.land_emissions[:n],
            "coeff": e.abatement_coefficient[:n],
            "forcing_next": e.forcing_other[1:],
            "discount": num[0] / num[:n],
            "numeraire": num[:n],
            "rho": self.rates.short_rate[:n],
        }
        s = self.schedule
        if s is not None:
            data.update(
                fund_offset=s.offset, fund_log_a=s.log_a, fund_b=s.b,
                fund_tau=s.tau, fund_weight=s.weight,
            )
        return {k: jnp.asarray(v) for k, v in data.items()}

    def data(self) -> dict:
        return self._data

    def spec(self, collect: tuple[str, ...] = (), frozen_output: bool = False) -> KernelSpec:
        s = self.schedule
        return KernelSpec(
            params=self.params,
            comp=self.compensator.to_compensation(),
            n_tranches=0 if s is None else s.offset.shape[1],
            max_offset=0 if s is None else s.max_offset,
            spread=0.0 if s is None else float(self.funding.spread),
            block=self.block,
            collect=tuple(collect),
            frozen_output=frozen_output,
        )

    def policy_arrays(self, strategy: Strategy, theta=None):
        theta = jnp.asarray(strategy.parameters() if theta is None else theta, dtype=jnp.float64)
        return strategy.evaluate(theta, self._data["times"], self._data["rho"])

    def simulate(self, strategy: Strategy, theta=None, collect=FLOW_FIELDS + STATE_FIELDS) -> Trajectory:
        """Full trajectory for ``strategy`` (optionally with parameters ``theta``)."""
        mu, s = self.policy_arrays(strategy, theta)
        spec = self.spec(collect)
        welfare, floored, rec, final = _jit_run(spec)(mu, s, self._data)
        rec = {k: np.asarray(v) for k, v in rec.items()}
        states = {}
        for name in STATE_FIELDS:
            if name in rec:
                last = np.broadcast_to(np.asarray(getattr(final, name)), rec[name].shape[1:])
                states[name] = np.vstack((rec.pop(name), last[None, :]))
        return Trajectory(
            grid=self.grid,
            flows=rec,
            states=states,
            welfare_paths=np.asarray(welfare),
            rates=self.rates,
            mu=np.asarray(mu),
            savings=np.asarray(s),
            floored=int(np.sum(floored)),
            truncated_tranches=0 if self.schedule is None else self.schedule.n_truncated,
        )

    def objective(self, strategy: Strategy):
        """``(value_fn, value_and_grad_fn)`` of expected welfare in the policy parameters."""
        return _objective_fns(self.spec(), _template(strategy), self._data)


def _template(strategy: Strategy) -> Strategy:
    return strategy.with_parameters(np.zeros(len(strategy.parameters())))


@functools.lru_cache(maxsize=64)
def _jit_run(spec: KernelSpec):
    return jax.jit(lambda mu, s, data: run_kernel(spec, mu, s, data))


@functools.lru_cache(maxsize=64)
def _objective_kernel(spec: KernelSpec, template: Strategy):
    def objective(theta, data):
        mu, s = template.evaluate(theta, data["times"], data["rho"])
        welfare, _, _, _ = run_kernel(spec, mu, s, data)
        return jnp.sum(welfare) / welfare.shape[0]

    return jax.jit(objective), jax.jit(jax.value_and_grad(objective))


def _objective_fns(spec: KernelSpec, template: Strategy, data: dict):
    value, value_and_grad = _objective_kernel(spec, template)

    def f(theta):
        return float(value(jnp.asarray(theta, dtype=jnp.float64), data))

    def fg(theta):
        v, g = value_and_grad(jnp.asarray(theta, dtype=jnp.float64), data)
        return float(v), np.asarray(g)

    return f, fg
