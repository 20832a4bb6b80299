"""Adjoint sensitivities of welfare and per-node costs.

Derivatives are pathwise on fixed Brownian increments. Reverse mode is
provided by JAX; :class:`Tape` exposes the record / replay / adjoint view
of one evaluation. A central finite-difference routine with a Richardson
step is the independent oracle used in tests.

Cost sensitivities ``dC(t)/dmu(s)`` are partials with gross output held
at its simulated path, so they isolate the direct channels of ``mu(s)``:
the abatement cost at ``s`` and, through emissions and temperature, the
damage cost at ``t >= s``. Indirect effects through capital are carried
by the cost-to-value weights ``w(t)``, which are total derivatives.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, Mapping

import jax
import jax.numpy as jnp
import numpy as np

from .model import DiceModel, KernelSpec, Trajectory, _template, run_kernel
from .policy import OneParam, Strategy


class Tape:
    """One recorded evaluation of ``fn(inputs) -> scalar`` with its adjoint.

    Parameters
    ----------
    fn : callable
        Maps a dict of named arrays to a scalar.
    inputs : mapping
        Named leaves to differentiate against.
    """

    def __init__(self, fn: Callable, inputs: Mapping):
        self._fn = fn
        self.inputs = {k: jnp.asarray(v, dtype=jnp.float64) for k, v in inputs.items()}
        self.value, self._pullback = jax.vjp(fn, self.inputs)

    @classmethod
    def record(cls, fn: Callable, **inputs) -> "Tape":
        return cls(fn, inputs)

    def replay(self):
        """Re-run the recorded forward computation."""
        return jax.vjp(self._fn, self.inputs)[0]

    def adjoint(self, seed=1.0) -> dict:
        """Adjoints of every input for the output cotangent ``seed``."""
        (grads,) = self._pullback(jnp.asarray(seed, dtype=jnp.float64) * jnp.ones_like(self.value))
        return {k: np.asarray(v) for k, v in grads.items()}


def gradient(tape: Tape, names=None) -> np.ndarray:
    """Flat gradient of the taped scalar with respect to ``names`` (default all)."""
    names = list(tape.inputs) if names is None else list(names)
    missing = [k for k in names if k not in tape.inputs]
    if missing:
        raise KeyError(f"not recorded on the tape: {', '.join(missing)}")
    adj = tape.adjoint()
    return np.concatenate([np.ravel(adj[k]) for k in names])


def finite_difference_gradient(f: Callable, x, h: float = 1e-4, richardson: bool = True,
                               scale=None) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x``, per coordinate.

    With ``richardson=True`` the estimates at ``h`` and ``h/2`` are
    combined as ``(4 D(h/2) - D(h)) / 3``, cancelling the ``h**2`` term.
    ``scale`` multiplies the step per coordinate.
    """
    x = np.asarray(x, dtype=float)
    steps = h * (np.ones_like(x) if scale is None else np.asarray(scale, dtype=float))
    out = np.empty_like(x)
    for i in range(x.size):
        def central(step):
            up, dn = x.copy(), x.copy()
            up[i] += step
            dn[i] -= step
            return (f(up) - f(dn)) / (2.0 * step)

        d1 = central(steps[i])
        out[i] = (4.0 * central(steps[i] / 2.0) - d1) / 3.0 if richardson else d1
    return out


# ---------------------------------------------------------------- kernels


def _policy_arrays(template: Strategy, theta, data):
    return template.evaluate(theta, data["times"], data["rho"])


@functools.lru_cache(maxsize=32)
def _shock_grad_fn(spec: KernelSpec, template: Strategy):
    """Gradient of mean welfare with respect to additive cost/emission/consumption shocks."""

    def welfare(shocks, theta, data):
        mu, s = _policy_arrays(template, theta, data)
        w, _, _, _ = run_kernel(spec, mu, s, data, shocks)
        return jnp.sum(w) / w.shape[0]

    return jax.jit(jax.grad(welfare))


@functools.lru_cache(maxsize=32)
def _cost_fn(spec: KernelSpec, template: Strategy):
    """Costs (C_A, C_D) as functions of nodewise mu perturbations and theta, gross output frozen."""

    def costs(delta, theta, data, ygross):
        mu, s = _policy_arrays(template, theta, data)
        _, _, rec, _ = run_kernel(spec, mu + delta, s, data, ygross=ygross)
        return rec["abatement"], rec["damage"]

    return costs


def _shock_zeros(model: DiceModel) -> dict:
    n, p = model.grid.n_steps, model.n_paths
    return {k: jnp.zeros((n, p)) for k in ("cost", "emission", "consumption")}


def welfare_shock_gradients(model: DiceModel, strategy: Strategy, theta=None) -> dict:
    """Per-path ``dW_p/d(shock)`` for cost, emission and consumption shocks.

    Arrays have shape ``(n_steps, n_paths)``; ``W_p`` is path ``p``'s
    discounted welfare (so the path average's gradient is divided by P).
    """
    theta = jnp.asarray(strategy.parameters() if theta is None else theta, dtype=jnp.float64)
    grads = _shock_grad_fn(model.spec(), _template(strategy))(_shock_zeros(model), theta, model.data())
    return {k: np.asarray(v) * model.n_paths for k, v in grads.items()}


def cost_value_weights(model: DiceModel, strategy: Strategy, theta=None) -> np.ndarray:
    """``w_p(t) = -dW_p / dC(t) / dt``: welfare value of one unit of cost flow at ``t``.

    Includes discounting and the capital channel.
    """
    g = welfare_shock_gradients(model, strategy, theta)["cost"]
    return -g / model.grid.steps[:, None]


def _row_seed_vjp(fn, leaf, weights: np.ndarray, chunk: int) -> np.ndarray:
    """Row ``t`` of the result is the gradient of ``mean_p weights[t, p] * fn(leaf)[t, p]``.

    Seeds are built chunk by chunk and pulled back together with ``vmap``.
    """
    _, pullback = jax.vjp(fn, leaf)
    batched = jax.jit(jax.vmap(lambda ct: pullback(ct)[0]))
    n, p = weights.shape
    rows = []
    for start in range(0, n, chunk):
        idx = np.arange(start, min(n, start + chunk))
        seeds = np.zeros((idx.size, n, p))
        seeds[np.arange(idx.size), idx, :] = weights[idx] / p
        rows.append(np.asarray(batched(jnp.asarray(seeds))))
    return np.concatenate(rows, axis=0)


def _cost_jacobians(model: DiceModel, strategy: Strategy, wrt: str, theta=None, weights=None,
                    chunk: int | None = None):
    """``J[kind][t, j] = mean_p weights_p(t) dC_kind,p(t) / d leaf_j`` with gross output frozen."""
    theta = jnp.asarray(strategy.parameters() if theta is None else theta, dtype=jnp.float64)
    data = model.data()
    traj = model.simulate(strategy, theta, collect=("gross_output",))
    ygross = jnp.asarray(traj.flows["gross_output"])
    n, p = ygross.shape
    spec = model.spec(collect=("abatement", "damage"), frozen_output=True)
    costs = _cost_fn(spec, _template(strategy))
    w = np.ones((n, p)) if weights is None else np.broadcast_to(weights, (n, p))
    chunk = chunk or max(1, min(n, 4_000_000 // (n * p)))
    zero_delta = jnp.zeros((n, 1))

    if wrt == "mu":
        fn = lambda leaf, which: costs(leaf, theta, data, ygross)[which]
        leaf = zero_delta
    else:
        fn = lambda leaf, which: costs(zero_delta, leaf, data, ygross)[which]
        leaf = theta

    result = {}
    for which, kind in enumerate(("abatement", "damage")):
        rows = _row_seed_vjp(lambda x: fn(x, which), leaf, w, chunk)
        result[kind] = rows.reshape(n, -1)
    return result


def nodewise_cost_sensitivities(model: DiceModel, strategy: Strategy, theta=None, weights=None,
                                nodes=None) -> dict:
    """``dC_A(t)/dmu(s)`` and ``dC_D(t)/dmu(s)`` as ``(n_t, n_s)`` matrices.

    ``mu(s)`` is perturbed on all paths at once; entries are path averages,
    optionally weighted per path and node by ``weights``. The full matrices
    come from batched reverse sweeps. Passing ``nodes`` (flow-node indices)
    returns only those columns, computed as directional derivatives, which
    is far cheaper for many paths.
    """
    n = model.grid.n_steps
    if nodes is not None:
        nodes = [int(s) for s in nodes]
        if any(not 0 <= s < n for s in nodes):
            raise IndexError(f"node outside the {n} flow nodes")
        return _cost_columns(model, strategy, nodes, theta, weights)
    return _cost_jacobians(model, strategy, "mu", theta, weights)


def _cost_columns(model, strategy, nodes, theta=None, weights=None) -> dict:
    theta = jnp.asarray(strategy.parameters() if theta is None else theta, dtype=jnp.float64)
    data = model.data()
    traj = model.simulate(strategy, theta, collect=("gross_output",))
    ygross = jnp.asarray(traj.flows["gross_output"])
    n, p = ygross.shape
    w = np.ones((n, p)) if weights is None else np.broadcast_to(weights, (n, p))
    spec = model.spec(collect=("abatement", "damage"), frozen_output=True)
    costs = _cost_fn(spec, _template(strategy))
    fn = lambda delta: costs(delta, theta, data, ygross)
    out = {"abatement": np.zeros((n, len(nodes))), "damage": np.zeros((n, len(nodes)))}
    for j, s in enumerate(nodes):
        tangent = jnp.zeros((n, 1)).at[s, 0].set(1.0)
        _, (d_a, d_d) = jax.jvp(fn, (jnp.zeros((n, 1)),), (tangent,))
        out["abatement"][:, j] = np.sum(w * np.asarray(d_a), axis=1) / p
        out["damage"][:, j] = np.sum(w * np.asarray(d_d), axis=1) / p
    return out


def reduced_model_sensitivities(model: DiceModel, strategy: Strategy, theta=None) -> dict:
    """Cost sensitivities to the time of full abatement of a :class:`OneParam` policy.

    Returns the raw curves ``abatement``/``damage`` (path-averaged
    ``dC(t)/dT``), their value-weighted versions and the weighted total
    ``sum_t w(t) (dC_A + dC_D)(t) dt``, which equals ``-dW/dT``.
    """
    if not isinstance(strategy.abatement, OneParam) or strategy.savings.parameters().size:
        raise TypeError("reduced-model sensitivities need a OneParam policy with fixed savings")
    raw = _cost_jacobians(model, strategy, "theta", theta)
    weights = cost_value_weights(model, strategy, theta)
    weighted = _cost_jacobians(model, strategy, "theta", theta, weights)
    dt = model.grid.steps
    total = float(np.sum((weighted["abatement"][:, 0] + weighted["damage"][:, 0]) * dt))
    return {
        "abatement": raw["abatement"][:, 0],
        "damage": raw["damage"][:, 0],
        "weighted_abatement": weighted["abatement"][:, 0],
        "weighted_damage": weighted["damage"][:, 0],
        "weighted_total": total,
    }


@dataclass(frozen=True)
class SocialCost:
    """Pathwise social cost of carbon per flow node, shape ``(n_steps, n_paths)``."""

    scc: np.ndarray
    scc_numeraire: np.ndarray


def social_cost_of_carbon(model: DiceModel, strategy: Strategy, theta=None) -> SocialCost:
    """``SCC = -1000 (dW/dE) / (dW/dC)`` and its numéraire-relative version."""
    g = welfare_shock_gradients(model, strategy, theta)
    d_cons = g["consumption"]
    if np.any(d_cons == 0.0):
        raise ZeroDivisionError("marginal value of consumption vanishes")
    scc = -1000.0 * g["emission"] / d_cons
    n = model.grid.n_steps
    num = model.rates.numeraire[:n]
    return SocialCost(scc, scc / num)
