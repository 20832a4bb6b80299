"""Financing extensions: funded abatement cost and a default compensator on damages.

Funding rebooks the instantaneous abatement cost ``C_mu(t_i)`` as loans
repaid at later nodes, each tranche accrued with the simple forward rate
observed at origination. Because ``1 + FR(t, T; t) (T - t) = 1/P(t, T)``,
the repayment discounted with the bond ``P(t, T)`` returns exactly the
financed amount on every path.

The compensator multiplies damage cost by ``DC*(x)``, where ``x`` is the
gross damage relative to gross output or to the numéraire.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Compensation, compensation_factor
from .grid import TimeGrid
from .montecarlo import PathVector
from .rates import HullWhiteParams, RatePath

FUNDING_MODES = ("none", "single", "annuity")
NORMALIZERS = ("gdp", "numeraire")


@dataclass(frozen=True)
class FundingConfig:
    """How abatement cost is financed.

    ``mode="single"`` repays after ``years``; ``mode="annuity"`` splits the
    cost into ``loans`` equal tranches maturing 1, 2, ... years after
    origination. ``spread`` (1/yr) is added to the forward rate.
    """

    mode: str = "none"
    years: float = 0.0
    loans: int = 1
    spread: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in FUNDING_MODES:
            raise ValueError(f"unknown funding mode {self.mode!r}; expected one of {FUNDING_MODES}")
        if self.years < 0.0:
            raise ValueError("funding period must be nonnegative")
        if self.loans < 1:
            raise ValueError("an annuity needs at least one loan")

    @classmethod
    def single(cls, years: float, spread: float = 0.0) -> "FundingConfig":
        return cls("single", years=float(years), spread=spread)

    @classmethod
    def annuity(cls, loans: int, spread: float = 0.0) -> "FundingConfig":
        return cls("annuity", years=1.0, loans=int(loans), spread=spread)

    @property
    def enabled(self) -> bool:
        return self.mode != "none"

    def maturities(self) -> np.ndarray:
        """Year offsets of the repayment tranches."""
        if self.mode == "annuity":
            return np.arange(1, self.loans + 1, dtype=float)
        return np.array([self.years if self.mode == "single" else 0.0])


@dataclass(frozen=True)
class CompensatorConfig:
    """Default compensation of damage cost.

    ``factor`` is the multiplier applied at or above ``threshold`` (a
    fraction of the normalizer). ``smooth=True`` replaces the jump by a
    smoothstep over ``[threshold - smooth_width, threshold]``.
    """

    threshold: float = 0.03
    factor: float = 10.0
    normalizer: str = "gdp"
    smooth: bool = False
    smooth_width: float = 0.0025
    affects_output: bool = True

    def __post_init__(self) -> None:
        if self.factor < 1.0:
            raise ValueError("compensation factor must be at least 1")
        if self.normalizer not in NORMALIZERS:
            raise ValueError(f"unknown normalizer {self.normalizer!r}; expected one of {NORMALIZERS}")
        if self.threshold <= 0.0:
            raise ValueError("compensation threshold must be positive")

    @classmethod
    def off(cls) -> "CompensatorConfig":
        return cls(factor=1.0)

    def to_compensation(self) -> Compensation:
        return Compensation(
            factor=float(self.factor),
            threshold=float(self.threshold),
            use_numeraire=self.normalizer == "numeraire",
            smooth_width=float(self.smooth_width) if self.smooth else 0.0,
            affects_output=bool(self.affects_output),
        )


def apply_compensator(damage_gross, normalizer, config: CompensatorConfig):
    """``C_D = C_D° * DC*(C_D° / normalizer)``."""
    damage_gross = np.asarray(damage_gross, dtype=float)
    normalizer = np.asarray(normalizer, dtype=float)
    if np.any(normalizer <= 0.0):
        raise ValueError("compensator normalizer must be positive")
    dc = np.asarray(compensation_factor(damage_gross / normalizer, config.to_compensation()))
    return damage_gross * dc


@dataclass(frozen=True, eq=False)
class FundingSchedule:
    """Tranche tables for every origination node, shape ``(n_steps, n_tranches)``.

    ``offset[i, k]`` is the node distance from origination to repayment,
    ``log_a`` and ``b`` give ``P(t_i, t_j) = exp(log_a - b rho(t_i))`` and
    ``tau`` the accrual period in years. Tranches maturing past the last
    flow node are booked there (``truncated``), accrued to that node.
    """

    config: FundingConfig
    offset: np.ndarray
    log_a: np.ndarray
    b: np.ndarray
    tau: np.ndarray
    weight: np.ndarray
    truncated: np.ndarray

    @property
    def max_offset(self) -> int:
        return int(self.offset.max())

    @property
    def n_truncated(self) -> int:
        return int(self.truncated.sum())

    def repayment_factor(self, rate_at_origin) -> np.ndarray:
        """``weight * (1 + (FR + spread) tau)`` per origination node, tranche and path.

        ``rate_at_origin`` has shape ``(n_steps, n_paths)``; the result has
        shape ``(n_steps, n_tranches, n_paths)``.
        """
        inv_bond = np.exp(self.b[:, :, None] * rate_at_origin[:, None, :] - self.log_a[:, :, None])
        return self.weight[:, :, None] * (inv_bond + self.config.spread * self.tau[:, :, None])


def funding_schedule(config: FundingConfig, rates: HullWhiteParams) -> FundingSchedule:
    """Precompute repayment nodes and bond coefficients on the rate grid."""
    grid = rates.grid
    n = grid.n_steps
    times = grid.times
    offsets_years = config.maturities()
    m = offsets_years.size
    last_flow = n - 1

    step = grid.steps[-1]
    offset = np.zeros((n, m), dtype=np.int64)
    truncated = np.zeros((n, m), dtype=bool)
    for i in range(n):
        for k, years in enumerate(offsets_years):
            target = times[i] + years
            if target <= times[-1]:
                j = int(np.argmin(np.abs(times - target)))
            else:
                j = n + int(round((target - times[-1]) / step))
            if j > last_flow:
                j, truncated[i, k] = last_flow, True
            offset[i, k] = j - i

    a_tab, b_tab, tau_tab = rates.node_bond_table(int(offset.max()))
    cols = np.arange(n)[:, None]
    return FundingSchedule(
        config=config,
        offset=offset,
        log_a=a_tab[offset, cols],
        b=b_tab[offset, cols],
        tau=tau_tab[offset, cols],
        weight=np.full((n, m), 1.0 / m),
        truncated=truncated,
    )


def rebook_abatement(abatement_instant, rate_path: RatePath, schedule: FundingSchedule) -> np.ndarray:
    """Repayment schedule ``C_A`` of shape ``(n_steps, n_paths)`` from ``C_mu``."""
    c_mu = np.atleast_2d(np.asarray(abatement_instant, dtype=float))
    if c_mu.shape[0] != schedule.offset.shape[0]:
        c_mu = c_mu.T
    n = schedule.offset.shape[0]
    rho = rate_path.short_rate[:n]
    n_paths = max(c_mu.shape[1], rho.shape[1])
    amounts = schedule.repayment_factor(np.broadcast_to(rho, (n, n_paths))) * c_mu[:, None, :]
    rebooked = np.zeros((n, n_paths))
    target = np.arange(n)[:, None] + schedule.offset
    for k in range(schedule.offset.shape[1]):
        np.add.at(rebooked, target[:, k], amounts[:, k, :])
    return rebooked


def fund_single(abatement_instant, t: float, years: float, rates: HullWhiteParams, rate,
                spread: float = 0.0) -> PathVector:
    """Repayment at ``t + years`` of a cost ``C_mu(t)`` financed at ``FR(t, t + years; t)``."""
    c = abatement_instant.values if isinstance(abatement_instant, PathVector) else np.asarray(abatement_instant, float)
    if years == 0.0:
        return PathVector(c)
    log_a, b = rates.bond_coefficients(t, t + years)
    rate = rate.values if isinstance(rate, PathVector) else np.asarray(rate, float)
    return PathVector(c * (np.exp(b * rate - log_a) + spread * years))


def fund_annuity(abatement_instant, loans: int, rate_path: RatePath, rates: HullWhiteParams,
                 spread: float = 0.0) -> tuple[np.ndarray, FundingSchedule]:
    """Rebook every node's ``C_mu`` into ``loans`` annual tranches.

    Returns the schedule ``C_A(T_j)`` and the tranche tables; the tables'
    ``truncated`` mask flags tranches cut at the horizon.
    """
    schedule = funding_schedule(FundingConfig.annuity(loans, spread), rates)
    return rebook_abatement(abatement_instant, rate_path, schedule), schedule


def tranche_present_value(abatement_instant, rate_path: RatePath, schedule: FundingSchedule) -> np.ndarray:
    """Bond-discounted value at origination of all tranches, shape ``(n_steps, n_paths)``.

    Equals ``C_mu`` pathwise when the spread is zero.
    """
    c_mu = np.atleast_2d(np.asarray(abatement_instant, dtype=float))
    if c_mu.shape[0] != schedule.offset.shape[0]:
        c_mu = c_mu.T
    n = schedule.offset.shape[0]
    rho = rate_path.short_rate[:n]
    n_paths = max(c_mu.shape[1], rho.shape[1])
    rho = np.broadcast_to(rho, (n, n_paths))
    amounts = schedule.repayment_factor(rho) * c_mu[:, None, :]
    bonds = np.exp(schedule.log_a[:, :, None] - schedule.b[:, :, None] * rho[:, None, :])
    return np.sum(amounts * bonds, axis=1)
