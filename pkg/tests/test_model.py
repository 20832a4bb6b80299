import numpy as np
import pytest

from conftest import stochastic_model
from stochdice import HullWhiteParams, TimeGrid, simulate_rate
from stochdice.extensions import CompensatorConfig, FundingConfig, funding_schedule, rebook_abatement
from stochdice.model import DiceModel
from stochdice.policy import LinearStochastic, OneParam, Strategy


def test_welfare_is_discounted_utility_sum(det_model):
    traj = det_model.simulate(Strategy(OneParam(100.0)))
    dt = det_model.grid.steps
    disc = np.exp(-0.015 * det_model.grid.times[:-1])
    want = np.sum(traj["utility"][:, 0] * disc * dt)
    assert traj.welfare == pytest.approx(want, rel=1e-12)
    assert traj.n_paths == 1


def test_block_size_does_not_change_results(params):
    grid = TimeGrid.uniform(103.0, 1.0)  # not a multiple of the block
    a = DiceModel.deterministic(params, grid, block=25).simulate(Strategy(OneParam(80.0)))
    b = DiceModel.deterministic(params, grid, block=7).simulate(Strategy(OneParam(80.0)))
    assert a.welfare == pytest.approx(b.welfare, rel=1e-14)
    np.testing.assert_allclose(a["temp_atm"], b["temp_atm"], rtol=1e-14)
    assert a["temp_atm"].shape == (104, 1)


def test_objective_matches_simulation(det_model):
    s = Strategy(OneParam(90.0))
    f, fg = det_model.objective(s)
    assert f([90.0]) == pytest.approx(det_model.simulate(s).welfare, rel=1e-14)
    v, g = fg(np.array([90.0]))
    assert v == pytest.approx(f([90.0]), rel=1e-15) and g.shape == (1,)


def test_trajectory_accessors(det_model):
    traj = det_model.simulate(Strategy(OneParam(100.0)))
    np.testing.assert_allclose(traj.cost, traj["abatement"] + traj["damage"])
    assert traj.at("temp_atm", 0).expectation() == pytest.approx(0.85)
    assert traj["mu"].shape == traj.cost.shape
    with pytest.raises(KeyError):
        traj["nonsense"]
    np.testing.assert_allclose(traj.discount[:, 0], np.exp(-0.015 * det_model.grid.times[:-1]), rtol=1e-13)


def test_emissions_drop_to_land_use_at_full_abatement(det_model):
    traj = det_model.simulate(Strategy(OneParam(50.0)))
    np.testing.assert_allclose(traj["emissions"][60:, 0], det_model.exogenous.land_emissions[60:-1], rtol=1e-12)


def test_grid_mismatch_rejected(params):
    g1, g2 = TimeGrid.uniform(10.0, 1.0), TimeGrid.uniform(20.0, 1.0)
    rates = simulate_rate(HullWhiteParams.constant(g2, 0.015, 0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        DiceModel(g1, params, rates)
    with pytest.raises(ValueError):
        DiceModel(g1, params, simulate_rate(HullWhiteParams.constant(g1, 0.015, 0.0, 0.0, 0.0)),
                  funding=FundingConfig.single(5))


def test_funded_abatement_matches_numpy_rebooking(small_stoch_model, params, small_grid):
    m = small_stoch_model
    funded = DiceModel(small_grid, params, m.rates, hull_white=m.hull_white, funding=FundingConfig.annuity(10))
    s = Strategy(LinearStochastic(0.01, -0.1))
    traj = funded.simulate(s)
    sched = funding_schedule(FundingConfig.annuity(10), m.hull_white)
    want = rebook_abatement(traj["abatement_instant"], m.rates, sched)
    np.testing.assert_allclose(traj["abatement"], want, rtol=1e-12, atol=1e-15)
    assert traj.truncated_tranches == sched.n_truncated


def test_compensator_raises_booked_damage(params, small_grid):
    base = DiceModel.deterministic(params, small_grid)
    comp = DiceModel.deterministic(params, small_grid, compensator=CompensatorConfig(threshold=0.002))
    s = Strategy(OneParam(200.0))
    a, b = base.simulate(s), comp.simulate(s)
    assert a["damage_gross"][0, 0] == b["damage_gross"][0, 0]
    hit = b["damage_gross"] / b["gross_output"] >= 0.002
    assert hit.any()
    np.testing.assert_allclose(b["damage"][hit], 10 * b["damage_gross"][hit], rtol=1e-14)
    assert b.welfare < a.welfare


def test_compensator_without_output_effect_keeps_capital(params, small_grid):
    comp = CompensatorConfig(threshold=0.002, affects_output=False)
    m = DiceModel.deterministic(params, small_grid, compensator=comp)
    base = DiceModel.deterministic(params, small_grid)
    s = Strategy(OneParam(200.0))
    np.testing.assert_allclose(m.simulate(s)["capital"], base.simulate(s)["capital"], rtol=1e-14)
    assert m.simulate(s).welfare < base.simulate(s).welfare


def test_stochastic_paths_differ(small_stoch_model):
    traj = small_stoch_model.simulate(Strategy(LinearStochastic(0.01, -0.2)))
    assert traj.n_paths == 64
    assert np.std(traj["mu"][-1]) > 0.0
