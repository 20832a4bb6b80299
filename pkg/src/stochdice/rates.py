"""Hull-White one-factor model for a stochastic time-preference rate.

The short rate follows

    d rho = (theta(t) - a(t) rho) dt + sigma(t) dW,      dN = rho N dt,

with ``a``, ``sigma`` and ``theta`` piecewise constant on the intervals of
a :class:`~stochdice.grid.TimeGrid`. On each interval the pair
``(rho(t+h), int_t^{t+h} rho ds)`` given ``rho(t)`` is jointly Gaussian, and
:func:`simulate_rate` samples it exactly. The covariance between the end
rate and the integrated rate (``sigma**2 B**2 / 2``) is carried by a second
Brownian factor, so ``N(t+h) = N(t) exp(int rho)`` has no discretization bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import TimeGrid
from .montecarlo import PathVector

_SERIES_CUTOFF = 1e-3


class CalibrationError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SegmentMoments:
    """Conditional moments over one interval of length ``h``.

    ``rho(t+h) = decay * rho(t) + drift_rate`` plus noise, and
    ``I = loading * rho(t) + drift_integral`` plus noise.
    """

    decay: np.ndarray
    loading: np.ndarray  # B = int_0^h exp(-a u) du
    drift_rate: np.ndarray
    drift_integral: np.ndarray
    var_rate: np.ndarray
    var_integral: np.ndarray
    cov: np.ndarray


def segment_moments(a, sigma, theta, h) -> SegmentMoments:
    """Exact conditional moments of ``(rho(t+h), int rho)`` for constant coefficients.

    Small ``a*h`` uses Taylor series so that the ``a -> 0`` (Ho-Lee) limit
    is exact and free of cancellation.
    """
    a, sigma, theta, h = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, sigma, theta, h)))
    x = a * h
    small = x < _SERIES_CUTOFF
    xs = np.where(small, 1.0, x)  # keeps the exact branch finite where unused

    # B/h, D/h^2 and J/h^3 with D = (h - B)/a and J = int_0^h B(u)^2 du
    b_ratio = np.where(small, 1.0 - x / 2 + x**2 / 6 - x**3 / 24, -np.expm1(-xs) / xs)
    d_ratio = np.where(small, 0.5 - x / 6 + x**2 / 24 - x**3 / 120, (xs + np.expm1(-xs)) / xs**2)
    j_ratio = np.where(
        small,
        1.0 / 3 - x / 4 + 7 * x**2 / 60 - x**3 / 24,
        (xs + 2 * np.expm1(-xs) - np.expm1(-2 * xs) / 2) / xs**3,
    )
    v_ratio = np.where(small, 1.0 - x + 2 * x**2 / 3 - x**3 / 3, -np.expm1(-2 * xs) / (2 * xs))

    loading = b_ratio * h
    d = d_ratio * h**2
    var_sigma = sigma**2
    return SegmentMoments(
        decay=np.exp(-x),
        loading=loading,
        drift_rate=theta * loading,
        drift_integral=theta * d,
        var_rate=var_sigma * v_ratio * h,
        var_integral=var_sigma * j_ratio * h**3,
        cov=0.5 * var_sigma * loading**2,
    )


@dataclass(frozen=True, eq=False)
class HullWhiteParams:
    """Hull-White parameters, piecewise constant on the intervals of ``grid``.

    ``mean_reversion``, ``volatility`` and ``drift`` hold one value per grid
    interval. Times past the last node reuse the last interval's values.
    """

    grid: TimeGrid
    r0: float
    mean_reversion: np.ndarray
    volatility: np.ndarray
    drift: np.ndarray

    def __post_init__(self) -> None:
        n = self.grid.n_steps
        for name in ("mean_reversion", "volatility", "drift"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.mean_reversion < 0.0):
            raise ValueError("mean reversion must be nonnegative")
        if np.any(self.volatility < 0.0):
            raise ValueError("volatility must be nonnegative")

    @classmethod
    def constant(cls, grid: TimeGrid, r0: float, mean_reversion: float = 0.02,
                 volatility: float = 0.003, drift: float | None = None) -> "HullWhiteParams":
        """Constant coefficients; the drift defaults to ``a * r0`` (stationary level r0)."""
        if drift is None:
            drift = mean_reversion * r0
        return cls(grid, float(r0), mean_reversion, volatility, drift)

    @property
    def is_deterministic(self) -> bool:
        return not np.any(self.volatility > 0.0)

    def with_volatility(self, volatility) -> "HullWhiteParams":
        return replace(self, volatility=volatility)

    def moments(self) -> SegmentMoments:
        return segment_moments(self.mean_reversion, self.volatility, self.drift, self.grid.steps)

    def _segments(self, t: float, T: float):
        """(h, a, sigma, theta) pieces partitioning ``[t, T]``."""
        times = self.grid.times
        if t < times[0] - 1e-12:
            raise ValueError("time before the grid start")
        cuts = times[(times > t) & (times < T)]
        points = np.concatenate(([t], cuts, [T]))
        idx = np.clip(np.searchsorted(times, points[:-1], side="right") - 1, 0, self.grid.n_steps - 1)
        return (np.diff(points), self.mean_reversion[idx], self.volatility[idx], self.drift[idx])

    def bond_coefficients(self, t: float, T: float) -> tuple[float, float]:
        """``(A, B)`` with ``P(t, T) = exp(A - B rho(t))``."""
        if T < t:
            raise ValueError(f"bond maturity {T} precedes {t}")
        if T == t:
            return 0.0, 0.0
        h, a, sigma, theta = self._segments(t, T)
        m = segment_moments(a, sigma, theta, h)
        g_next = 0.0
        log_a = 0.0
        for k in range(h.size - 1, -1, -1):
            log_a += -(m.drift_integral[k] + g_next * m.drift_rate[k])
            log_a += 0.5 * (m.var_integral[k] + g_next**2 * m.var_rate[k] + 2.0 * g_next * m.cov[k])
            g_next = m.loading[k] + m.decay[k] * g_next
        return float(log_a), float(g_next)

    def node_bond_table(self, max_offset: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Bond coefficients between grid nodes ``i`` and ``i + d``.

        Returns ``(A, B, tau)`` of shape ``(max_offset + 1, n_steps)`` where
        row ``d`` describes ``P(t_i, t_{i+d})`` and ``tau`` the year fraction.
        Nodes past the horizon continue with the last step length.
        """
        n = self.grid.n_steps
        pad = max_offset
        ext = lambda v: np.concatenate((v, np.full(pad, v[-1])))
        h = ext(self.grid.steps)
        m = segment_moments(ext(self.mean_reversion), ext(self.volatility), ext(self.drift), h)
        total = n + pad
        A = np.zeros((max_offset + 1, total))
        B = np.zeros((max_offset + 1, total))
        tau = np.zeros((max_offset + 1, total))
        for d in range(1, max_offset + 1):
            g = np.zeros(total)
            g[: total - 1] = B[d - 1, 1:]
            a_prev = np.zeros(total)
            a_prev[: total - 1] = A[d - 1, 1:]
            tau_prev = np.zeros(total)
            tau_prev[: total - 1] = tau[d - 1, 1:]
            A[d] = a_prev - (m.drift_integral + g * m.drift_rate) + 0.5 * (
                m.var_integral + g**2 * m.var_rate + 2.0 * g * m.cov
            )
            B[d] = m.loading + m.decay * g
            tau[d] = h + tau_prev
        return A[:, :n], B[:, :n], tau[:, :n]

    def discount_curve(self) -> np.ndarray:
        """Analytic ``P(0, t_i) = E[N(0)/N(t_i)]`` on all grid nodes."""
        return np.exp(_forward_moments(self)[2])

    def mean_rate(self) -> np.ndarray:
        """``E[rho(t_i)]`` on all grid nodes."""
        return _forward_moments(self)[0]

    def rate_variance(self) -> np.ndarray:
        return _forward_moments(self)[1]


def _forward_moments(params: HullWhiteParams):
    """Unconditional mean/variance of rho(t_i) and log P(0, t_i)."""
    m = params.moments()
    n = params.grid.n_steps
    mean = np.empty(n + 1)
    var = np.empty(n + 1)
    log_p = np.empty(n + 1)
    mean[0], var[0], log_p[0] = params.r0, 0.0, 0.0
    mean_int, var_int, cov = 0.0, 0.0, 0.0
    for k in range(n):
        e, b = m.decay[k], m.loading[k]
        mean_int += mean[k] * b + m.drift_integral[k]
        var_int += 2.0 * b * cov + b * b * var[k] + m.var_integral[k]
        cov = e * cov + e * b * var[k] + m.cov[k]
        mean[k + 1] = e * mean[k] + m.drift_rate[k]
        var[k + 1] = e * e * var[k] + m.var_rate[k]
        log_p[k + 1] = -mean_int + 0.5 * var_int
    return mean, var, log_p


@dataclass(frozen=True, eq=False)
class RatePath:
    """Simulated short rate and numéraire on every grid node.

    Arrays have shape ``(n_nodes, n_paths)``; ``n_paths`` is 1 when the
    model is deterministic (compressed). ``numeraire`` may include the
    per-node martingale adjustment, ``raw_numeraire`` never does.
    """

    grid: TimeGrid
    short_rate: np.ndarray
    numeraire: np.ndarray
    integrated_rate: np.ndarray
    raw_numeraire: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.raw_numeraire is None:
            object.__setattr__(self, "raw_numeraire", self.numeraire)

    @property
    def n_paths(self) -> int:
        return self.short_rate.shape[1]

    @property
    def is_deterministic(self) -> bool:
        return self.n_paths == 1

    def rate(self, i: int) -> PathVector:
        return PathVector(self.short_rate[i])

    def discount(self, i: int) -> PathVector:
        """``N(0)/N(t_i)``."""
        return PathVector(self.numeraire[0] / self.numeraire[i])


def simulate_rate(params: HullWhiteParams, increments: np.ndarray | None = None,
                  numeraire_adjustment: bool = False) -> RatePath:
    """Sample the short rate and numéraire on ``params.grid``.

    Parameters
    ----------
    params : HullWhiteParams
    increments : ndarray, shape (n_steps, 2, n_paths)
        Brownian increments with variance ``dt``; factor 0 drives the rate,
        factor 1 the part of the integrated rate orthogonal to it. Ignored
        (and optional) when the volatility is identically zero.
    numeraire_adjustment : bool
        Rescale ``N(t_i)`` per node so that the sample mean of ``1/N(t_i)``
        equals the analytic ``P(0, t_i)``. Pathwise rates are untouched.
    """
    grid = params.grid
    n = grid.n_steps
    m = params.moments()
    if params.is_deterministic:
        n_paths = 1
        z_rate = z_int = np.zeros((n, 1))
    else:
        if increments is None:
            raise ValueError("stochastic rates need Brownian increments")
        increments = np.asarray(increments, dtype=float)
        if increments.ndim != 3 or increments.shape[0] != n or increments.shape[1] < 2:
            raise ValueError(
                f"expected increments of shape ({n}, 2, n_paths), got {increments.shape}"
            )
        n_paths = increments.shape[2]
        scale = 1.0 / np.sqrt(grid.steps)[:, None]
        z_rate = increments[:, 0, :] * scale
        z_int = increments[:, 1, :] * scale

    sd_rate = np.sqrt(m.var_rate)
    beta = np.divide(m.cov, sd_rate, out=np.zeros(n), where=sd_rate > 0.0)
    sd_orth = np.sqrt(np.maximum(m.var_integral - beta**2, 0.0))

    rho = np.empty((n + 1, n_paths))
    integral = np.empty((n, n_paths))
    rho[0] = params.r0
    for k in range(n):
        integral[k] = m.loading[k] * rho[k] + m.drift_integral[k] + beta[k] * z_rate[k] + sd_orth[k] * z_int[k]
        rho[k + 1] = m.decay[k] * rho[k] + m.drift_rate[k] + sd_rate[k] * z_rate[k]

    log_n = np.zeros((n + 1, n_paths))
    np.cumsum(integral, axis=0, out=log_n[1:])
    raw = np.exp(log_n)
    numeraire = raw
    if numeraire_adjustment and n_paths > 1:
        sample = np.mean(1.0 / raw, axis=1)
        numeraire = raw * (sample / params.discount_curve())[:, None]
    return RatePath(grid, rho, numeraire, integral, raw)


def zero_bond(params: HullWhiteParams, t: float, T: float, rate) -> PathVector:
    """Pathwise zero-coupon bond ``P(t, T)`` given ``rho(t)``."""
    if t > T:
        raise ValueError(f"bond maturity {T} precedes valuation time {t}")
    log_a, b = params.bond_coefficients(t, T)
    rate = rate.values if isinstance(rate, PathVector) else np.asarray(rate, dtype=float)
    return PathVector(np.exp(log_a - b * rate))


def forward_rate(bond, t: float, T: float) -> PathVector:
    """Simple-compounded forward ``FR(t, T; t) = (1/P(t, T) - 1) / (T - t)``."""
    if not T > t:
        raise ValueError("forward rate needs T > t")
    bond = bond.values if isinstance(bond, PathVector) else np.asarray(bond, dtype=float)
    return PathVector((1.0 / bond - 1.0) / (T - t))


def certainty_equivalent_rate(params: HullWhiteParams) -> np.ndarray:
    """Deterministic rate whose discount factors equal ``E[N(0)/N(t)]``.

    One value per grid interval: ``-(log P(0,t_{i+1}) - log P(0,t_i)) / dt_i``
    from the closed-form bond curve.
    """
    log_p = np.log(params.discount_curve())
    return -np.diff(log_p) / params.grid.steps


def calibrate_drift(target, mean_reversion, volatility, grid: TimeGrid, tol: float = 1e-10) -> HullWhiteParams:
    """Fit ``r0`` and ``theta`` so the certainty-equivalent rate equals ``target``.

    ``log P(0, t_{k+1})`` is affine in ``theta_k`` once earlier intervals are
    fixed, so each interval is solved exactly in one forward sweep.
    """
    n = grid.n_steps
    target = np.broadcast_to(np.asarray(target, dtype=float), (n,))
    a = np.broadcast_to(np.asarray(mean_reversion, dtype=float), (n,))
    sigma = np.broadcast_to(np.asarray(volatility, dtype=float), (n,))
    unit = segment_moments(a, sigma, 1.0, grid.steps)
    target_log_p = -np.concatenate(([0.0], np.cumsum(target * grid.steps)))

    theta = np.empty(n)
    mean, var = float(target[0]), 0.0
    mean_int, var_int, cov = 0.0, 0.0, 0.0
    for k in range(n):
        e, b = unit.decay[k], unit.loading[k]
        var_int_next = var_int + 2.0 * b * cov + b * b * var + unit.var_integral[k]
        base = -(mean_int + mean * b) + 0.5 * var_int_next
        theta[k] = (base - target_log_p[k + 1]) / unit.drift_integral[k]
        mean_int += mean * b + theta[k] * unit.drift_integral[k]
        var_int = var_int_next
        cov = e * cov + e * b * var + unit.cov[k]
        mean = e * mean + theta[k] * unit.drift_rate[k]
        var = e * e * var + unit.var_rate[k]

    params = HullWhiteParams(grid, float(target[0]), a, sigma, theta)
    residual = float(np.max(np.abs(certainty_equivalent_rate(params) - target)))
    if not residual <= tol:
        raise CalibrationError("drift calibration did not reproduce the target rate", residual)
    return params
