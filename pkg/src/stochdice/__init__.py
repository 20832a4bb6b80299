"""DICE-2016 under a stochastic Hull-White time-preference rate.

Importing the package switches JAX to double precision; every model
quantity is computed in float64.
"""

import jax

jax.config.update("jax_enable_x64", True)

from .grid import TimeGrid
from .montecarlo import BrownianDriver, PathVector, expectation, generate_increments, quantile
from .params import DiceParams, ParameterError
from .rates import (
    CalibrationError,
    HullWhiteParams,
    RatePath,
    calibrate_drift,
    certainty_equivalent_rate,
    forward_rate,
    simulate_rate,
    zero_bond,
)

__version__ = "0.1.0"

__all__ = [
    "BrownianDriver",
    "CalibrationError",
    "DiceParams",
    "HullWhiteParams",
    "ParameterError",
    "PathVector",
    "RatePath",
    "TimeGrid",
    "calibrate_drift",
    "certainty_equivalent_rate",
    "expectation",
    "forward_rate",
    "generate_increments",
    "quantile",
    "simulate_rate",
    "zero_bond",
]
