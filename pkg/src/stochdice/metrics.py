"""Burden and pricing metrics computed from simulated trajectories."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .grid import TimeGrid
from .montecarlo import PathVector
from .model import DiceModel, Trajectory
from .policy import Strategy
from .sensitivity import SocialCost, cost_value_weights, nodewise_cost_sensitivities, social_cost_of_carbon

REFERENCE_BURDEN = 0.03
DEFAULT_GAMMA_NODES = (10, 20, 50)


def cost_per_gdp(trajectory: Trajectory) -> np.ndarray:
    """Instantaneous ``C(t) / GDP(t)`` per flow node and path (GDP is gross output)."""
    gdp = trajectory.gdp
    if np.any(gdp <= 0.0):
        raise ZeroDivisionError("GDP must be positive")
    return trajectory.cost / gdp


def pathway_summary(values: np.ndarray, levels=(0.1, 0.9)) -> dict:
    """Per-node mean and percentiles over paths of a ``(nodes, paths)`` array."""
    values = np.asarray(values, dtype=float)
    out = {"mean": np.sum(values, axis=1) / values.shape[1]}
    for q in levels:
        out[f"p{round(q * 100)}"] = np.quantile(values, q, axis=1, method="linear")
    return out


def _window_weights(times: np.ndarray, start: int, length: float):
    """Trapezoid weights on ``times[start:]`` for ``[t_s, t_s + length]``.

    An end point between nodes is handled by linear interpolation of the
    integrand. Returns the weights and whether the window was cut at the
    last node.
    """
    t0 = times[start]
    end = t0 + length
    truncated = end > times[-1] + 1e-12
    end = min(end, times[-1])
    w = np.zeros(times.size)
    j = start
    while j + 1 < times.size and times[j + 1] <= end + 1e-12:
        h = times[j + 1] - times[j]
        w[j] += h / 2
        w[j + 1] += h / 2
        j += 1
    if j + 1 < times.size and end > times[j] + 1e-12:
        h = end - times[j]
        frac = h / (times[j + 1] - times[j])
        # integral of the linear interpolant over [t_j, end]
        w[j] += h * (1.0 - frac / 2)
        w[j + 1] += h * frac / 2
    return w, truncated


def lifetime_average(series, s: float, lifetime: float, numeraire, grid: TimeGrid,
                     average: bool = True) -> PathVector:
    """``int_s^{s+T} x(t) N(s)/N(t) dt`` over a lifetime window, trapezoidal.

    ``series`` and ``numeraire`` are flow-node arrays ``(n, paths or 1)``.
    With ``average=True`` the integral is divided by the window length, so
    a vanishing lifetime returns the instantaneous value. Windows reaching
    past the last flow node are cut there (see :func:`window_truncated`).
    """
    times = grid.times[: np.asarray(series).shape[0]]
    i = _flow_index(times, s)
    x = np.atleast_2d(np.asarray(series, dtype=float).T).T
    num = np.atleast_2d(np.asarray(numeraire, dtype=float).T).T
    if lifetime <= 0.0:
        return PathVector(x[i])
    w, _ = _window_weights(times, i, lifetime)
    integrand = x * (num[i] / num)
    total = w @ integrand
    if average:
        total = total / min(lifetime, times[-1] - times[i]) if times[-1] > times[i] else x[i]
    return PathVector(total)


def window_truncated(grid: TimeGrid, s: float, lifetime: float, n_flow: int | None = None) -> bool:
    times = grid.times[: (n_flow or grid.n_steps)]
    return s + lifetime > times[-1] + 1e-12


def _flow_index(times, s):
    i = int(np.searchsorted(times, s - 1e-9))
    if i >= times.size or abs(times[i] - s) > 1e-9:
        raise ValueError(f"time {s} is not a flow node of the grid")
    return i


@dataclass(frozen=True, eq=False)
class LifetimeTable:
    """Life expectancy and population by birth year.

    Values outside the data range are held at the nearest data year.
    ``fallback`` marks a table synthesized because no data was available.
    """

    years: np.ndarray
    population: np.ndarray
    life_expectancy: np.ndarray
    fallback: bool = False

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.life_expectancy) <= 0.0):
            raise ValueError("life expectancy must be positive")
        if np.any(np.diff(self.years) <= 0):
            raise ValueError("years must be strictly increasing")

    @classmethod
    def load(cls, path: str | Path | None = None) -> "LifetimeTable":
        """Parse ``year, population_millions, life_expectancy_years`` (header required)."""
        if path is None:
            text = resources.files("stochdice.data").joinpath("population.csv").read_text()
        else:
            path = Path(path)
            if not path.exists():
                return cls.constant()
            text = path.read_text()
        rows = list(csv.DictReader(text.splitlines()))
        required = {"year", "population_millions", "life_expectancy_years"}
        if not rows or not required <= set(rows[0]):
            raise ValueError(f"population file needs columns {sorted(required)}")
        years = np.array([float(r["year"]) for r in rows])
        pop = np.array([float(r["population_millions"]) for r in rows])
        life = np.array([float(r["life_expectancy_years"]) for r in rows])
        return cls(years, pop, life)

    @classmethod
    def constant(cls, life_expectancy: float = 75.0, population: float = 7403.0) -> "LifetimeTable":
        return cls(np.array([2015.0]), np.array([population]), np.array([life_expectancy]), fallback=True)

    def lifetime(self, year: float) -> float:
        return float(np.interp(year, self.years, self.life_expectancy))

    def population_at(self, year: float) -> float:
        return float(np.interp(year, self.years, self.population))


def cohort_burden_table(trajectory: Trajectory, table: LifetimeTable,
                        birth_years=range(2015, 2201), reference: float = REFERENCE_BURDEN) -> list[dict]:
    """Lifetime-average cost per GDP for each birth-year cohort.

    Each row holds the path mean and 10/90 percentiles of
    ``C_bar(s) / GDP_bar(s)`` and the mean relative to ``reference``.
    """
    grid = trajectory.grid
    n = grid.n_steps
    num = trajectory.rates.numeraire[:n]
    cost, gdp = trajectory.cost, trajectory.gdp
    rows = []
    for year in birth_years:
        s = float(year) - grid.start_year
        life = table.lifetime(year)
        c_bar = lifetime_average(cost, s, life, num, grid).values
        y_bar = lifetime_average(gdp, s, life, num, grid).values
        ratio = PathVector(np.atleast_1d(c_bar / y_bar))
        rows.append({
            "birth_year": int(year),
            "life_expectancy": life,
            "population": table.population_at(year),
            "mean": ratio.expectation(),
            "p10": ratio.quantile(0.1),
            "p90": ratio.quantile(0.9),
            "relative_to_reference": ratio.expectation() / reference,
            "truncated": window_truncated(grid, s, life, n),
            "fallback": table.fallback,
        })
    return rows


@dataclass(frozen=True, eq=False)
class GammaDensity:
    """Damage cost at ``t`` per abatement cost at ``s`` for a marginal change of ``mu(s)``."""

    s: float
    times: np.ndarray
    values: np.ndarray

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.times))

    def expected_time(self) -> float:
        return expected_damage_time(self)

    def mean_time(self) -> float:
        """Expected damage time with the density normalized to unit mass."""
        return self.expected_time() / self.integral()


def gamma_density(s: float, damage_sensitivity, abatement_sensitivity: float, times,
                  weights=None, step: float = 1.0) -> GammaDensity:
    """``gamma_D(s; t) = -w(t) dC_D(t)/dmu(s) / (w(s) dC_A(s)/dmu(s) dt_s)``.

    ``damage_sensitivity`` is the curve ``t -> dC_D(t)/dmu(s)`` on the flow
    nodes. Without ``weights`` both sensitivities are taken as already
    value-weighted. ``step`` is the grid step at ``s`` that converts the
    nodal abatement sensitivity into a rate.
    """
    times = np.asarray(times, dtype=float)
    d = np.asarray(damage_sensitivity, dtype=float)
    i = _flow_index(times, s)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        d = w * d
        abatement_sensitivity = w[i] * abatement_sensitivity
    denom = abatement_sensitivity * step
    if denom == 0.0:
        raise ZeroDivisionError("abatement cost is insensitive to mu(s)")
    values = -d / denom
    values[times < s] = 0.0
    return GammaDensity(float(s), times, values)


def expected_damage_time(density: GammaDensity) -> float:
    """First moment ``int t gamma_D(s; t) dt``."""
    return float(np.trapezoid(density.times * density.values, density.times))


def gamma_densities(model: DiceModel, strategy: Strategy, nodes=DEFAULT_GAMMA_NODES) -> list[GammaDensity]:
    """Value-weighted ``gamma_D`` for the flow nodes at times ``nodes`` (years from start)."""
    weights = cost_value_weights(model, strategy)
    times = model.grid.times[:-1] - model.grid.times[0]
    idx = [_flow_index(times, s) for s in nodes]
    sens = nodewise_cost_sensitivities(model, strategy, weights=weights, nodes=idx)
    out = []
    for j, (s, i) in enumerate(zip(nodes, idx)):
        out.append(gamma_density(s, sens["damage"][:, j], sens["abatement"][i, j], times,
                                 step=model.grid.steps[i]))
    return out


def scc(model: DiceModel, strategy: Strategy) -> np.ndarray:
    """Pathwise social cost of carbon (USD per tCO2), ``(n_steps, n_paths)``."""
    return social_cost_of_carbon(model, strategy).scc


def scc_numeraire_relative(model: DiceModel, strategy: Strategy) -> np.ndarray:
    """``SCC(t) / N(t)``."""
    return social_cost_of_carbon(model, strategy).scc_numeraire


def consumption_growth(trajectory: Trajectory) -> np.ndarray:
    """``g = d ln c / dt`` between flow nodes, per path."""
    c = trajectory.flows["consumption_pc"]
    return np.diff(np.log(c), axis=0) / trajectory.grid.steps[: c.shape[0] - 1, None]


def ramsey_rate(growth, eta: float, rho):
    """Social discount rate ``r = eta * g + rho`` (pathwise when ``rho`` is)."""
    return eta * np.asarray(growth, dtype=float) + np.asarray(rho, dtype=float)
