"""DICE-2016 parameter set and parameter-file overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import tomli


class ParameterError(ValueError):
    """Raised for unknown keys or values violating parameter invariants."""


@dataclass(frozen=True)
class DiceParams:
    """Exogenous parameters of the DICE-2016 climate-economy model.

    Field names double as the keys of parameter override files. The
    bundled ``data/dice2016.toml`` documents the GAMS name of each field.
    Rates quoted "per period" refer to ``classical_period`` years.
    """

    start_year: float
    classical_period: float
    population0: float
    population_adjustment: float
    population_asymptote: float
    tfp0: float
    tfp_growth0: float
    tfp_growth_decline: float
    capital_elasticity: float
    depreciation: float
    capital0: float
    output0: float
    intensity_growth0: float
    intensity_growth_decline: float
    land_emissions0: float
    land_emissions_decline: float
    industrial_emissions0: float
    abatement0: float
    carbon_atm0: float
    carbon_upper0: float
    carbon_lower0: float
    carbon_atm_eq: float
    carbon_upper_eq: float
    carbon_lower_eq: float
    transfer_atm_upper: float
    transfer_upper_lower: float
    co2_per_carbon: float
    climate_sensitivity: float
    forcing_other0: float
    forcing_other1: float
    forcing_ramp_years: float
    temp_ocean0: float
    temp_atm0: float
    c1: float
    c3: float
    c4: float
    forcing_co2_doubling: float
    damage_quadratic: float
    max_damage_fraction: float
    abatement_exponent: float
    backstop_price: float
    backstop_decline: float
    elasticity_marginal_utility: float
    time_preference: float
    consumption_floor: float
    savings_rate: float
    optimize_savings: bool = False

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "optimize_savings":
                if not isinstance(v, bool):
                    raise ParameterError("optimize_savings must be a boolean")
            elif isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParameterError(f"{f.name} must be a number, got {v!r}")
        if not self.elasticity_marginal_utility > 1.0:
            raise ParameterError("elasticity_marginal_utility must exceed 1")
        if not self.time_preference > 0.0:
            raise ParameterError("time_preference must be positive")
        if not self.abatement_exponent > 1.0:
            raise ParameterError("abatement_exponent must exceed 1")
        if self.damage_quadratic < 0.0:
            raise ParameterError("damage_quadratic must be nonnegative")
        if not 0.0 <= self.savings_rate < 1.0:
            raise ParameterError("savings_rate must lie in [0, 1)")

    @classmethod
    def dice2016(cls) -> "DiceParams":
        """The published DICE-2016R parameter set."""
        text = resources.files("stochdice.data").joinpath("dice2016.toml").read_text()
        return cls(**tomli.loads(text))

    @classmethod
    def from_file(cls, path: str | Path, base: "DiceParams | None" = None) -> "DiceParams":
        """Load overrides from a TOML or JSON file on top of ``base``."""
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            overrides = json.loads(text)
        else:
            overrides = tomli.loads(text)
        return (base or cls.dice2016()).with_overrides(overrides)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "DiceParams":
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ParameterError(f"unknown DICE parameter(s): {', '.join(unknown)}")
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    # Derived carbon-cycle coefficients, per classical period.
    @property
    def carbon_transfer(self) -> tuple[tuple[float, float, float], ...]:
        b12 = self.transfer_atm_upper
        b23 = self.transfer_upper_lower
        b21 = b12 * self.carbon_atm_eq / self.carbon_upper_eq
        b32 = b23 * self.carbon_upper_eq / self.carbon_lower_eq
        return (
            (1.0 - b12, b21, 0.0),
            (b12, 1.0 - b21 - b23, b32),
            (0.0, b23, 1.0 - b32),
        )

    @property
    def feedback(self) -> float:
        """Climate feedback parameter fco22x / t2xco2 (W/m2 per degC)."""
        return self.forcing_co2_doubling / self.climate_sensitivity

    @property
    def intensity0(self) -> float:
        """Initial carbon intensity sigma (GtCO2 per trillion USD)."""
        return self.industrial_emissions0 / (self.output0 * (1.0 - self.abatement0))
