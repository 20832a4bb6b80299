"""DICE-2016 dynamics as an explicit Euler scheme on an arbitrary time grid.

All functions are written against ``jax.numpy`` and operate elementwise on
per-path arrays, so one code path serves plain simulation, compressed
deterministic runs (arrays of length one) and reverse-mode differentiation.

Units follow DICE: capital and output in trillion USD (per year for flows),
carbon in GtC, emissions in GtCO2 per year, population in millions and
per-capita consumption in thousand USD.
"""

from __future__ import annotations

from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from .grid import TimeGrid
from .params import DiceParams


class ConsumptionError(ValueError):
    """Raised when per-capita consumption is not positive."""


def _concrete(x) -> bool:
    return not isinstance(x, jax.core.Tracer)


class ModelState(NamedTuple):
    """Climate and economy stocks at one grid node, one entry per path."""

    capital: jnp.ndarray
    carbon_atm: jnp.ndarray
    carbon_upper: jnp.ndarray
    carbon_lower: jnp.ndarray
    temp_atm: jnp.ndarray
    temp_ocean: jnp.ndarray
    cumulative_emissions: jnp.ndarray

    @classmethod
    def initial(cls, params: DiceParams, n_paths: int = 1) -> "ModelState":
        full = lambda v: jnp.full((n_paths,), float(v))
        return cls(
            full(params.capital0),
            full(params.carbon_atm0),
            full(params.carbon_upper0),
            full(params.carbon_lower0),
            full(params.temp_atm0),
            full(params.temp_ocean0),
            full(0.0),
        )


class Exogenous(NamedTuple):
    """Policy-independent schedules on the grid nodes (length ``n + 1``)."""

    times: np.ndarray
    population: np.ndarray
    tfp: np.ndarray
    intensity: np.ndarray
    land_emissions: np.ndarray
    forcing_other: np.ndarray
    abatement_coefficient: np.ndarray  # theta_1(t)


def exogenous_schedules(grid: TimeGrid, params: DiceParams) -> Exogenous:
    """Population, productivity and carbon intensity stepped on ``grid``.

    The stepping uses the DICE per-period growth rates rescaled to each step
    length, so a 5-year grid reproduces the GAMS recursions node for node.
    Land-use emissions, other forcing and the backstop price are smooth
    closed forms of time and are evaluated at the node times directly.
    """
    p = params
    period = p.classical_period
    tau = grid.times - grid.times[0]
    steps = grid.steps
    n = grid.n_steps

    pop = np.empty(n + 1)
    tfp = np.empty(n + 1)
    sig = np.empty(n + 1)
    pop[0], tfp[0], sig[0] = p.population0, p.tfp0, p.intensity0
    for i in range(n):
        frac = steps[i] / period
        pop[i + 1] = pop[i] * (p.population_asymptote / pop[i]) ** (p.population_adjustment * frac)
        ga = p.tfp_growth0 * np.exp(-p.tfp_growth_decline * tau[i])
        tfp[i + 1] = tfp[i] / (1.0 - ga) ** frac
        gsig = p.intensity_growth0 * (1.0 + p.intensity_growth_decline) ** tau[i]
        sig[i + 1] = sig[i] * np.exp(gsig * steps[i])

    land = p.land_emissions0 * (1.0 - p.land_emissions_decline) ** (tau / period)
    forcing = forcing_other(tau, p)
    backstop = p.backstop_price * (1.0 - p.backstop_decline) ** (tau / period)
    coeff = backstop * sig / p.abatement_exponent / 1000.0
    return Exogenous(grid.times.copy(), pop, tfp, sig, land, forcing, coeff)


def forcing_other(tau, params: DiceParams):
    """Non-CO2 forcing, a linear ramp from ``fex0`` to ``fex1`` then constant."""
    ramp = np.minimum(np.asarray(tau, dtype=float) / params.forcing_ramp_years, 1.0)
    return params.forcing_other0 + (params.forcing_other1 - params.forcing_other0) * ramp


def damage_fraction(temp_atm, params: DiceParams):
    """Quadratic damage share of gross output, capped at ``max_damage_fraction``."""
    return jnp.minimum(params.damage_quadratic * temp_atm**2, params.max_damage_fraction)


def abatement_cost_fraction(mu, coefficient, params: DiceParams):
    """Abatement cost share of gross output, ``theta_1 * mu**theta_2``."""
    if _concrete(mu) and np.any(np.asarray(mu) < 0.0):
        raise ValueError("abatement rate must be nonnegative")
    return coefficient * jnp.power(mu, params.abatement_exponent)


def utility(consumption_pc, population, params: DiceParams):
    """CRRA utility flow ``L * (c**(1 - eta) - 1) / (1 - eta)``."""
    if _concrete(consumption_pc) and np.any(np.asarray(consumption_pc) <= 0.0):
        raise ConsumptionError("per-capita consumption must be positive")
    one_eta = 1.0 - params.elasticity_marginal_utility
    return population * (jnp.power(consumption_pc, one_eta) - 1.0) / one_eta


class Compensation(NamedTuple):
    """Default-compensation settings in array form (see :mod:`extensions`)."""

    factor: float = 1.0
    threshold: float = 0.03
    use_numeraire: bool = False
    smooth_width: float = 0.0
    affects_output: bool = True


def compensation_factor(x, comp: Compensation):
    """``DC*(x)``: 1 below the threshold, ``factor`` at or above it."""
    if comp.smooth_width > 0.0:
        u = jnp.clip((x - (comp.threshold - comp.smooth_width)) / comp.smooth_width, 0.0, 1.0)
        return 1.0 + (comp.factor - 1.0) * u * u * (3.0 - 2.0 * u)
    return jnp.where(x >= comp.threshold, comp.factor, 1.0)


class StepInputs(NamedTuple):
    """Everything the step from node ``i`` to ``i + 1`` needs besides the state."""

    mu: jnp.ndarray
    savings: jnp.ndarray
    dt: float
    tau: float
    population: float
    tfp: float
    intensity: float
    land_emissions: float
    abatement_coefficient: float
    forcing_other_next: float
    discount: jnp.ndarray  # N(0)/N(t_i)
    numeraire: jnp.ndarray
    cost_shock: jnp.ndarray = 0.0
    emission_shock: jnp.ndarray = 0.0
    consumption_shock: jnp.ndarray = 0.0
    ygross: jnp.ndarray | None = None
    funded_abatement: jnp.ndarray | None = None


class StepOutput(NamedTuple):
    """Flows at node ``i`` on every path."""

    gross_output: jnp.ndarray
    damage_gross: jnp.ndarray  # C_D before compensation
    damage: jnp.ndarray
    abatement_instant: jnp.ndarray  # C_mu
    abatement: jnp.ndarray
    output: jnp.ndarray
    consumption: jnp.ndarray
    consumption_pc: jnp.ndarray
    utility: jnp.ndarray
    emissions: jnp.ndarray
    industrial_emissions: jnp.ndarray
    floored: jnp.ndarray


def gross_output(state: ModelState, x: StepInputs, params: DiceParams):
    return x.tfp * (x.population / 1000.0) ** (1.0 - params.capital_elasticity) * jnp.power(
        state.capital, params.capital_elasticity
    )


def flows(state: ModelState, x: StepInputs, params: DiceParams,
          comp: Compensation = Compensation()) -> StepOutput:
    """Output, costs, consumption, utility and emissions at one node."""
    ygross = gross_output(state, x, params) if x.ygross is None else x.ygross
    damage_gross = ygross * damage_fraction(state.temp_atm, params)
    if comp.factor == 1.0:
        damage = damage_gross
    else:
        scale = x.numeraire if comp.use_numeraire else ygross
        damage = damage_gross * compensation_factor(damage_gross / scale, comp)
    abatement_instant = ygross * abatement_cost_fraction(x.mu, x.abatement_coefficient, params)
    abatement = abatement_instant if x.funded_abatement is None else x.funded_abatement

    booked_damage = damage if comp.affects_output else damage_gross
    output = ygross - booked_damage - abatement - x.cost_shock
    consumption = (1.0 - x.savings) * output + x.consumption_shock
    if not comp.affects_output:
        consumption = consumption - (damage - damage_gross)
    raw_pc = 1000.0 * consumption / x.population
    floor = params.consumption_floor
    consumption_pc = jnp.maximum(raw_pc, floor)
    util = utility(consumption_pc, x.population, params)

    industrial = x.intensity * (1.0 - x.mu) * ygross
    emissions = industrial + x.land_emissions + x.emission_shock
    return StepOutput(
        ygross, damage_gross, damage, abatement_instant, abatement, output, consumption,
        consumption_pc, util, emissions, industrial, (raw_pc < floor).astype(jnp.float64),
    )


def advance(state: ModelState, out: StepOutput, x: StepInputs, params: DiceParams) -> ModelState:
    """Euler update of the stocks from node ``i`` to ``i + 1``."""
    p = params
    dt = x.dt
    frac = dt / p.classical_period
    investment = x.savings * out.output
    capital = (1.0 - p.depreciation) ** dt * state.capital + dt * investment

    phi = p.carbon_transfer
    m = (state.carbon_atm, state.carbon_upper, state.carbon_lower)
    flux = [sum(phi[r][c] * m[c] for c in range(3)) - m[r] for r in range(3)]
    carbon_atm = m[0] + frac * flux[0] + out.emissions * dt / p.co2_per_carbon
    carbon_upper = m[1] + frac * flux[1]
    carbon_lower = m[2] + frac * flux[2]

    forcing = p.forcing_co2_doubling * jnp.log2(carbon_atm / p.carbon_atm_eq) + x.forcing_other_next
    gap = state.temp_atm - state.temp_ocean
    temp_atm = state.temp_atm + frac * p.c1 * (forcing - p.feedback * state.temp_atm - p.c3 * gap)
    temp_ocean = state.temp_ocean + frac * p.c4 * gap
    return ModelState(
        capital, carbon_atm, carbon_upper, carbon_lower, temp_atm, temp_ocean,
        state.cumulative_emissions + out.emissions * dt,
    )


def euler_step(state: ModelState, x: StepInputs, params: DiceParams,
               comp: Compensation = Compensation()) -> tuple[ModelState, StepOutput]:
    """One Euler step; returns the next state and the flows at the current node."""
    out = flows(state, x, params, comp)
    return advance(state, out, x, params), out
