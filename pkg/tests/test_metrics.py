import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochdice import TimeGrid
from stochdice.metrics import (
    REFERENCE_BURDEN,
    GammaDensity,
    LifetimeTable,
    cohort_burden_table,
    consumption_growth,
    cost_per_gdp,
    gamma_densities,
    gamma_density,
    lifetime_average,
    pathway_summary,
    ramsey_rate,
    window_truncated,
)
from stochdice.policy import OneParam, Strategy

GRID = TimeGrid.uniform(200.0, 1.0)


def test_lifetime_average_exponential_closed_form():
    # [DERIVED] x = e^{g t}, N = e^{r t}: (1/T) int_s^{s+T} e^{g t} e^{r (s - t)} dt
    t = GRID.times[:-1]
    g, r, s, T = 0.02, 0.03, 10.0, 40.0
    x = np.exp(g * t)[:, None]
    num = np.exp(r * t)[:, None]
    got = lifetime_average(x, s, T, num, GRID).expectation()
    k = g - r
    want = np.exp(g * s) * np.expm1(k * T) / (k * T)
    assert got == pytest.approx(want, rel=5e-5)  # trapezoid error O(h^2 k^2 / 12)


def test_lifetime_average_fractional_window():
    # linear integrand is integrated exactly, including the partial last step
    t = GRID.times[:-1]
    x = (2.0 + 0.5 * t)[:, None]
    got = lifetime_average(x, 3.0, 10.5, np.ones_like(x), GRID).expectation()
    assert got == pytest.approx(2.0 + 0.5 * (3.0 + 10.5 / 2), rel=1e-14)
    raw = lifetime_average(x, 3.0, 10.5, np.ones_like(x), GRID, average=False).expectation()
    assert raw == pytest.approx(got * 10.5, rel=1e-14)


def test_lifetime_average_zero_length_is_instantaneous():
    x = np.arange(200.0)[:, None] ** 2
    assert lifetime_average(x, 7.0, 0.0, np.ones_like(x), GRID).expectation() == 49.0


def test_lifetime_average_off_grid_start_rejected():
    x = np.ones((200, 1))
    with pytest.raises(ValueError):
        lifetime_average(x, 7.5, 10.0, x, GRID)


@settings(max_examples=30)
@given(st.floats(0.1, 5.0), st.floats(1.0, 90.0), st.integers(0, 100))
def test_lifetime_average_of_constant(c, life, s):
    x = np.full((200, 1), c)
    assert lifetime_average(x, float(s), life, np.ones_like(x), GRID).expectation() == pytest.approx(c, rel=1e-12)


def test_window_truncation_flag():
    assert window_truncated(GRID, 150.0, 60.0)
    assert not window_truncated(GRID, 100.0, 60.0)


def test_pathway_summary():
    v = np.tile(np.arange(11.0), (3, 1))
    out = pathway_summary(v)
    np.testing.assert_allclose(out["mean"], 5.0)
    np.testing.assert_allclose(out["p10"], 1.0)
    np.testing.assert_allclose(out["p90"], 9.0)


def test_lifetime_table_bundled_and_fallback(tmp_path):
    table = LifetimeTable.load()
    assert not table.fallback
    assert table.lifetime(2015) == 72.0 and table.lifetime(2100) == 82.0
    assert table.lifetime(2300) == 82.0  # held at the last data year
    assert table.population_at(2015) == 7403.0
    fb = LifetimeTable.load(tmp_path / "missing.csv")
    assert fb.fallback and fb.lifetime(2050) == 75.0
    bad = tmp_path / "bad.csv"
    bad.write_text("year,pop\n2015,1\n")
    with pytest.raises(ValueError):
        LifetimeTable.load(bad)
    with pytest.raises(ValueError):
        LifetimeTable(np.array([2015.0]), np.array([1.0]), np.array([0.0]))


def test_cost_per_gdp_and_cohorts(det_model, one_param_optimum):
    traj = det_model.simulate(one_param_optimum.strategy)
    ratio = cost_per_gdp(traj)
    assert ratio.shape == (500, 1)
    assert np.all(ratio > 0.0) and ratio.max() < 0.05
    rows = cohort_burden_table(traj, LifetimeTable.load(), range(2015, 2201, 5))
    assert rows[0]["birth_year"] == 2015 and rows[-1]["birth_year"] == 2200
    assert all(not r["truncated"] for r in rows)
    assert rows[0]["relative_to_reference"] == pytest.approx(rows[0]["mean"] / REFERENCE_BURDEN)
    assert rows[0]["p10"] == rows[0]["p90"] == rows[0]["mean"]  # one deterministic path


def test_gamma_density_synthetic():
    # [DERIVED] damage response -w(t) dC_D = e^{-(t-s)/50} / 50 per unit abatement cost
    times = np.arange(400.0)
    s = 10.0
    d = np.where(times > s, -np.exp(-(times - s) / 50.0) / 50.0, 0.0)
    dens = gamma_density(s, d, 1.0, times)
    assert dens.integral() == pytest.approx(1.0, abs=0.02)
    assert dens.mean_time() - s == pytest.approx(50.0, abs=1.0)
    assert np.all(dens.values[times < s] == 0.0)
    with pytest.raises(ZeroDivisionError):
        gamma_density(s, d, 0.0, times)


def test_gamma_density_weights_applied():
    times = np.arange(5.0)
    w = np.array([1.0, 2.0, 0.5, 0.5, 0.5])
    dens = gamma_density(1.0, -np.ones(5), 1.0, times, weights=w)
    np.testing.assert_allclose(dens.values, [0.0, 1.0, 0.25, 0.25, 0.25])


def test_gamma_densities_at_piecewise_optimum(params):
    from stochdice.model import DiceModel
    from stochdice.optimize import AdamConfig, optimize
    from stochdice.policy import Piecewise

    grid = TimeGrid.uniform(300.0, 1.0)
    model = DiceModel.deterministic(params, grid)
    res = optimize(model, Strategy(Piecewise.from_policy(OneParam(100.0), grid.times[:-1])), AdamConfig())
    dens = gamma_densities(model, res.strategy, (10, 50))
    for d in dens:
        # first-order condition per node: damage avoided balances abatement cost
        assert d.integral() == pytest.approx(1.0, abs=0.02)
        assert isinstance(d, GammaDensity)


def test_consumption_growth_and_ramsey(det_model, one_param_optimum):
    traj = det_model.simulate(one_param_optimum.strategy)
    g = consumption_growth(traj)
    assert g.shape == (499, 1) and 0.0 < g[0, 0] < 0.03
    np.testing.assert_allclose(ramsey_rate(g, 1.45, 0.015), 1.45 * g + 0.015)
