import jax.numpy as jnp
import numpy as np
import pytest

from stochdice import TimeGrid
from stochdice.model import DiceModel
from stochdice.policy import LinearStochastic, OneParam, Piecewise, Strategy
from stochdice.sensitivity import (
    Tape,
    cost_value_weights,
    finite_difference_gradient,
    gradient,
    nodewise_cost_sensitivities,
    reduced_model_sensitivities,
    social_cost_of_carbon,
    welfare_shock_gradients,
)


@pytest.fixture(scope="module")
def short_model(params):
    return DiceModel.deterministic(params, TimeGrid.uniform(80.0, 1.0))


def test_tape_adjoint_of_quadratic():
    tape = Tape.record(lambda d: jnp.sum(d["x"] ** 2) + 3.0 * d["y"], x=np.array([1.0, 2.0]), y=0.5)
    assert float(tape.value) == pytest.approx(6.5)
    assert float(tape.replay()) == pytest.approx(6.5)
    np.testing.assert_allclose(gradient(tape, ["x", "y"]), [2.0, 4.0, 3.0])
    np.testing.assert_allclose(tape.adjoint(2.0)["x"], [4.0, 8.0])
    with pytest.raises(KeyError, match="z"):
        gradient(tape, ["z"])


def test_finite_difference_richardson_accuracy():
    f = lambda x: float(np.sin(x[0]) * np.exp(x[1]))
    x = np.array([0.3, 0.2])
    want = [np.cos(0.3) * np.exp(0.2), np.sin(0.3) * np.exp(0.2)]
    np.testing.assert_allclose(finite_difference_gradient(f, x, h=1e-2), want, rtol=1e-8)
    plain = finite_difference_gradient(f, x, h=1e-2, richardson=False)
    assert np.max(np.abs(plain - want)) > 1e-6


def test_welfare_gradient_matches_finite_difference(short_model):
    s = Strategy(Piecewise(np.linspace(0.05, 0.9, 79)))
    f, fg = short_model.objective(s)
    x = s.parameters()
    _, g = fg(x)
    for i in (0, 17, 50, 78):
        fd = finite_difference_gradient(lambda v: f(np.concatenate((x[:i], v, x[i + 1:]))), x[i:i + 1], h=1e-4)
        assert g[i] == pytest.approx(fd[0], rel=1e-6)


def test_abatement_sensitivity_is_diagonal_and_causal(short_model):
    s = Strategy(OneParam(60.0))
    sens = nodewise_cost_sensitivities(short_model, s)
    a, d = sens["abatement"], sens["damage"]
    assert a.shape == (80, 80)
    np.testing.assert_array_equal(a - np.diag(np.diag(a)), 0.0)
    assert np.all(np.diag(a)[1:60] > 0.0)
    # damage at t is unaffected by mu(s) for t <= s
    assert np.all(np.triu(d) == 0.0)
    assert np.all(d[30, :29] < 0.0)


def test_column_sensitivities_match_full_jacobian(short_model):
    s = Strategy(OneParam(60.0))
    full = nodewise_cost_sensitivities(short_model, s)
    cols = nodewise_cost_sensitivities(short_model, s, nodes=[5, 40])
    np.testing.assert_allclose(cols["damage"], full["damage"][:, [5, 40]], rtol=1e-12, atol=1e-18)
    np.testing.assert_allclose(cols["abatement"], full["abatement"][:, [5, 40]], rtol=1e-12, atol=1e-18)
    with pytest.raises(IndexError):
        nodewise_cost_sensitivities(short_model, s, nodes=[80])


def test_column_sensitivities_stochastic_weighted(small_stoch_model):
    s = Strategy(LinearStochastic(0.01, -0.1))
    w = cost_value_weights(small_stoch_model, s)
    full = nodewise_cost_sensitivities(small_stoch_model, s, weights=w)
    cols = nodewise_cost_sensitivities(small_stoch_model, s, weights=w, nodes=[10])
    np.testing.assert_allclose(cols["damage"][:, 0], full["damage"][:, 10], rtol=1e-10, atol=1e-20)


def test_abatement_sensitivity_closed_form(short_model):
    # [DERIVED] dC_A/dmu = Ygross theta_1 theta_2 mu^(theta_2 - 1) with Ygross frozen
    s = Strategy(OneParam(60.0))
    traj = short_model.simulate(s)
    sens = nodewise_cost_sensitivities(short_model, s)
    i = 20
    mu = traj["mu"][i, 0]
    want = traj["gross_output"][i, 0] * short_model.exogenous.abatement_coefficient[i] * 2.6 * mu**1.6
    assert sens["abatement"][i, i] == pytest.approx(want, rel=1e-12)


def test_cost_value_weights_are_discount_like(short_model):
    s = Strategy(OneParam(60.0))
    w = cost_value_weights(short_model, s)[:, 0]
    assert np.all(w > 0.0) and w[0] > w[-1]


def test_reduced_sensitivities_vanish_at_optimum(det_model, one_param_optimum):
    sens = reduced_model_sensitivities(det_model, one_param_optimum.strategy)
    scale = np.sum(np.abs(sens["weighted_abatement"] * det_model.grid.steps))
    assert abs(sens["weighted_total"]) < 1e-6 * scale
    # abatement cost falls and damage rises with a later full-abatement time
    assert sens["abatement"][50] < 0.0 and sens["damage"][150] > 0.0


def test_reduced_total_equals_welfare_derivative(short_model):
    s = Strategy(OneParam(60.0))
    sens = reduced_model_sensitivities(short_model, s)
    _, fg = short_model.objective(s)
    assert sens["weighted_total"] == pytest.approx(-fg(s.parameters())[1][0], rel=1e-8)


def test_reduced_requires_one_param(short_model):
    with pytest.raises(TypeError):
        reduced_model_sensitivities(short_model, Strategy(Piecewise(np.full(79, 0.5))))


def test_scc_against_finite_difference(short_model):
    # [DERIVED] bump emissions at node 10 and consumption at node 10
    s = Strategy(OneParam(60.0))
    sc = social_cost_of_carbon(short_model, s)
    data, spec = short_model.data(), short_model.spec()
    from stochdice.model import run_kernel

    mu, sav = short_model.policy_arrays(s)

    def bumped(kind, eps):
        shocks = {kind: jnp.zeros((80, 1)).at[10, 0].set(eps)}
        return float(run_kernel(spec, mu, sav, data, shocks)[0][0])

    de = (bumped("emission", 1e-3) - bumped("emission", -1e-3)) / 2e-3
    dc = (bumped("consumption", 1e-3) - bumped("consumption", -1e-3)) / 2e-3
    assert sc.scc[10, 0] == pytest.approx(-1000 * de / dc, rel=1e-5)


def test_scc_positive_and_rising(det_model, one_param_optimum):
    sc = social_cost_of_carbon(det_model, one_param_optimum.strategy)
    assert 20.0 < sc.scc[0, 0] < 50.0
    assert sc.scc[35, 0] > sc.scc[0, 0]
    np.testing.assert_allclose(sc.scc_numeraire[:, 0], sc.scc[:, 0] / det_model.rates.numeraire[:500, 0])


def test_shock_gradients_scaled_per_path(small_stoch_model):
    g = welfare_shock_gradients(small_stoch_model, Strategy(OneParam(80.0)))
    assert g["cost"].shape == (60, 64)
    assert np.all(g["cost"] < 0.0) and np.all(g["consumption"] > 0.0)
