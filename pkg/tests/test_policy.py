import jax
import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochdice.policy import (
    ConstantSavings,
    LinearStochastic,
    OneParam,
    Piecewise,
    PiecewiseSavings,
    Strategy,
    eval_linear_stochastic,
    eval_one_param,
    policy_gradient_parameters,
    set_policy_parameters,
)

TIMES = np.arange(200.0)


def test_one_param_ramp_values():
    mu = np.asarray(eval_one_param(TIMES, 0.03, 100.0))
    assert mu[0] == 0.03
    assert mu[50] == pytest.approx(0.03 + 0.97 * 0.5)
    assert mu[100] == 1.0 and mu[150] == 1.0


def test_one_param_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        eval_one_param(TIMES, 0.03, 0.0)


def test_one_param_derivative_zero_after_full():
    d = jax.grad(lambda T: eval_one_param(jnp.asarray(150.0), 0.03, T))(100.0)
    assert float(d) == 0.0
    d = jax.grad(lambda T: eval_one_param(jnp.asarray(50.0), 0.03, T))(100.0)
    assert float(d) == pytest.approx(-0.97 * 50.0 / 100.0**2)


@given(st.floats(-0.05, 0.1), st.floats(-0.05, 0.05), st.floats(-50.0, 50.0))
def test_linear_stochastic_in_unit_interval(rate, a0, a1):
    mu = np.asarray(eval_linear_stochastic(TIMES[:, None], rate, 0.03, a0, a1))
    assert np.all((mu >= 0.0) & (mu <= 1.0))


def test_linear_stochastic_matching_one_param():
    one = OneParam(80.0)
    lin = LinearStochastic.matching(one)
    rates = jnp.full((200, 3), 0.02)
    a = np.asarray(one.evaluate(jnp.asarray(one.parameters()), TIMES, rates))
    b = np.asarray(lin.evaluate(jnp.asarray(lin.parameters()), TIMES, rates))
    np.testing.assert_allclose(np.broadcast_to(a, b.shape), b, rtol=0, atol=2e-16)


def test_linear_stochastic_negative_a1_speeds_low_rate_paths():
    lin = LinearStochastic(0.01, -0.2)
    rates = jnp.array([[0.0, 0.04]] * 5)
    mu = np.asarray(lin.evaluate(jnp.asarray(lin.parameters()), np.arange(5.0), rates))
    assert mu[4, 0] > mu[4, 1]


def test_piecewise_from_policy_and_hash():
    one = OneParam(100.0)
    pw = Piecewise.from_policy(one, TIMES)
    assert pw.values.size == 199 and pw.mu0 == 0.03
    mu = np.asarray(pw.evaluate(jnp.asarray(pw.parameters()), TIMES))[:, 0]
    np.testing.assert_allclose(mu, np.asarray(eval_one_param(TIMES, 0.03, 100.0)), rtol=1e-15)
    assert pw == Piecewise(pw.values, 0.03) and hash(pw) == hash(Piecewise(pw.values, 0.03))
    assert pw.names[0] == "mu[1]"
    with pytest.raises(ValueError):
        pw.evaluate(jnp.asarray(pw.parameters()), TIMES[:10])


def test_piecewise_clamps_out_of_range_values():
    pw = Piecewise(np.array([-0.5, 0.5, 1.5]))
    mu = np.asarray(pw.evaluate(jnp.asarray(pw.parameters()), np.arange(4.0)))[:, 0]
    assert mu.tolist() == [0.03, 0.0, 0.5, 1.0]


def test_strategy_flat_parameters_roundtrip():
    s = Strategy(LinearStochastic(0.01, -0.1), ConstantSavings(0.25, optimize=True))
    assert s.names == ("a0", "a1", "savings")
    np.testing.assert_array_equal(s.parameters(), [0.01, -0.1, 0.25])
    t = s.with_parameters([0.02, 0.3, 0.2])
    assert t.abatement.a1 == 0.3 and t.savings.rate == 0.2
    lo, hi = s.bounds()
    assert lo.tolist() == [0.0, -100.0, 0.0] and hi.tolist() == [1.0, 100.0, 0.99]
    assert s.scales().tolist() == [0.01, 1.0, 1.0]
    assert s.stochastic


def test_fixed_savings_has_no_parameters():
    s = Strategy(OneParam(90.0))
    assert s.names == ("time_to_full",)
    _, sav = s.evaluate(jnp.asarray(s.parameters()), TIMES, None)
    np.testing.assert_allclose(np.asarray(sav), 0.2582781456953642)


def test_piecewise_savings():
    ps = PiecewiseSavings(np.full(5, 0.2))
    s = Strategy(OneParam(), ps)
    assert len(s.names) == 6
    _, sav = s.evaluate(jnp.asarray(s.parameters()), np.arange(5.0), None)
    assert sav.shape == (5, 1)
    assert ps == PiecewiseSavings(np.full(5, 0.2)) and hash(ps) == hash(PiecewiseSavings(np.full(5, 0.2)))


def test_parameter_helpers():
    one = OneParam(70.0)
    assert policy_gradient_parameters(one) == [70.0]
    assert set_policy_parameters(one, [80.0]).time_to_full == 80.0
    with pytest.raises(ValueError):
        set_policy_parameters(one, [1.0, 2.0])
