"""Declarative scenarios: build the model, optimize, write CSV outputs.

A scenario file is TOML with the tables ``grid``, ``dice``, ``rates``,
``policy``, ``optimizer``, ``funding``, ``compensator``, ``outputs`` and an
optional ``sweep``. Every key has a default (see ``DEFAULTS``); unknown
keys are rejected with their dotted path. Outputs are written to a
temporary directory that is renamed into place only when the whole run
succeeded.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import platform
import shutil
import tempfile
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import tomli

from .extensions import CompensatorConfig, FundingConfig
from .grid import TimeGrid
from .metrics import (
    DEFAULT_GAMMA_NODES,
    LifetimeTable,
    cohort_burden_table,
    cost_per_gdp,
    gamma_densities,
    pathway_summary,
)
from .model import DiceModel, Trajectory
from .montecarlo import BrownianDriver
from .optimize import AdamConfig, OptimizeResult, optimize
from .params import DiceParams, ParameterError
from .policy import ConstantSavings, LinearStochastic, OneParam, Piecewise, Strategy
from .rates import CalibrationError, HullWhiteParams, calibrate_drift, simulate_rate
from .sensitivity import social_cost_of_carbon

OUTPUTS = ("pathways", "cohorts", "gamma_density", "scc", "trace")
PATHWAY_QUANTITIES = (
    "mu", "emissions", "temp_atm", "carbon_atm", "damage", "abatement", "cost",
    "gross_output", "cost_per_gdp", "consumption_pc", "short_rate",
)

DEFAULTS: dict[str, Any] = {
    "name": "scenario",
    "description": "",
    "seed": 20240101,
    "n_paths": 10_000,
    "grid": {"horizon": 500.0, "step": 1.0, "start_year": 2015.0},
    "dice": {},
    "dice_file": "",
    "rates": {
        "model": "deterministic",
        "r0": None,
        "mean_reversion": 0.02,
        "volatility": 0.003,
        "calibrate": True,
        "target": None,
        "numeraire_adjustment": True,
    },
    "policy": {
        "variant": "one-param",
        "mu0": 0.03,
        "time_to_full": 100.0,
        "a0": None,
        "a1": 0.0,
        "savings": None,
        "optimize_savings": False,
    },
    "optimizer": {
        "enabled": True,
        "learning_rate": 0.01,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "max_iter": 2000,
        "grad_tol": 1e-6,
        "decay": 0.0,
        "warm_start": True,
    },
    "funding": {"mode": "none", "years": 0.0, "loans": 1, "spread": 0.0},
    "compensator": {
        "enabled": False,
        "threshold": 0.03,
        "factor": 10.0,
        "normalizer": "gdp",
        "smooth": False,
        "smooth_width": 0.0025,
        "affects_output": True,
    },
    "outputs": {
        "files": list(OUTPUTS),
        "population_file": "",
        "gamma_nodes": list(DEFAULT_GAMMA_NODES),
        "cohort_first": 2015,
        "cohort_last": 2200,
    },
    "sweep": {"param": "", "values": []},
}

OPEN_TABLES = ("dice",)


class ConfigError(ValueError):
    """Malformed scenario; the message names the offending key path."""


def _merge(defaults: dict, given: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown key '{where}'")
        if isinstance(defaults[key], dict) and key not in OPEN_TABLES:
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(defaults[key], value, where + ".")
        else:
            out[key] = value
    return out


def load_config(path: str | Path) -> dict:
    """Parse and validate a scenario file; relative file keys resolve against it."""
    path = Path(path)
    try:
        given = tomli.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"scenario file not found: {path}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = _merge(DEFAULTS, given)
    for key, table in (("dice_file", None), ("population_file", "outputs")):
        holder = cfg if table is None else cfg[table]
        if holder[key]:
            f = Path(holder[key])
            f = f if f.is_absolute() else path.parent / f
            if not f.exists():
                raise ConfigError(f"'{key if table is None else table + '.' + key}' refers to missing file {f}")
            holder[key] = str(f)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"'{key}': {msg}")

    need(isinstance(cfg["seed"], int) and cfg["seed"] >= 0, "seed", "must be a nonnegative integer")
    need(isinstance(cfg["n_paths"], int) and cfg["n_paths"] >= 1, "n_paths", "must be a positive integer")
    need(cfg["rates"]["model"] in ("deterministic", "hull-white"), "rates.model",
         "must be 'deterministic' or 'hull-white'")
    need(cfg["rates"]["volatility"] >= 0.0, "rates.volatility", "must be nonnegative")
    need(cfg["rates"]["mean_reversion"] >= 0.0, "rates.mean_reversion", "must be nonnegative")
    need(cfg["policy"]["variant"] in ("piecewise", "one-param", "linear-stochastic"), "policy.variant",
         "must be 'piecewise', 'one-param' or 'linear-stochastic'")
    need(cfg["policy"]["time_to_full"] > 0.0, "policy.time_to_full", "must be positive")
    need(cfg["funding"]["mode"] in ("none", "single", "annuity"), "funding.mode",
         "must be 'none', 'single' or 'annuity'")
    need(cfg["compensator"]["normalizer"] in ("gdp", "numeraire"), "compensator.normalizer",
         "must be 'gdp' or 'numeraire'")
    need(cfg["compensator"]["factor"] >= 1.0, "compensator.factor", "must be at least 1")
    unknown = sorted(set(cfg["outputs"]["files"]) - set(OUTPUTS))
    need(not unknown, "outputs.files", f"unknown output(s) {unknown}")
    try:
        TimeGrid.uniform(**cfg["grid"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'grid': {exc}") from exc
    try:
        build_params(cfg)
    except ParameterError as exc:
        raise ConfigError(f"'dice': {exc}") from exc


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def set_by_path(cfg: dict, dotted: str, value) -> dict:
    """Copy of ``cfg`` with ``a.b.c = value``; the key must exist (or live in ``dice``)."""
    out = copy.deepcopy(cfg)
    keys = dotted.split(".")
    node = out
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            raise ConfigError(f"sweep parameter '{dotted}' is not addressable")
        node = node[k]
    if keys[-1] not in node and keys[0] not in OPEN_TABLES:
        raise ConfigError(f"sweep parameter '{dotted}' is not addressable")
    node[keys[-1]] = value
    return out


# ------------------------------------------------------------------ building


def build_params(cfg: dict) -> DiceParams:
    params = DiceParams.dice2016()
    if cfg["dice_file"]:
        params = DiceParams.from_file(cfg["dice_file"], params)
    return params.with_overrides(cfg["dice"])


def build_model(cfg: dict) -> DiceModel:
    params = build_params(cfg)
    grid = TimeGrid.uniform(**cfg["grid"])
    r = cfg["rates"]
    r0 = params.time_preference if r["r0"] is None else float(r["r0"])
    target = r0 if r["target"] is None else float(r["target"])
    a, sigma = float(r["mean_reversion"]), float(r["volatility"])
    if r["model"] == "deterministic" or sigma == 0.0:
        # sigma = 0 is an alias of the flat deterministic rate, level ``r0`` or the target
        level = target if r["calibrate"] else r0
        hw = HullWhiteParams.constant(grid, level, 0.0, 0.0, 0.0)
    elif r["calibrate"]:
        hw = calibrate_drift(target, a, sigma, grid)
    else:
        hw = HullWhiteParams.constant(grid, r0, a, sigma)
    if hw.is_deterministic:
        rates = simulate_rate(hw)
    else:
        inc = BrownianDriver(cfg["seed"], cfg["n_paths"], grid, 2).increments()
        rates = simulate_rate(hw, inc, numeraire_adjustment=bool(r["numeraire_adjustment"]))
    f = cfg["funding"]
    funding = {
        "none": FundingConfig(),
        "single": FundingConfig.single(f["years"], f["spread"]),
        "annuity": FundingConfig.annuity(f["loans"], f["spread"]),
    }[f["mode"]]
    c = cfg["compensator"]
    comp = CompensatorConfig.off()
    if c["enabled"]:
        comp = CompensatorConfig(
            threshold=c["threshold"], factor=c["factor"], normalizer=c["normalizer"],
            smooth=c["smooth"], smooth_width=c["smooth_width"], affects_output=c["affects_output"],
        )
    return DiceModel(grid, params, rates, hull_white=hw, funding=funding, compensator=comp)


def build_strategy(cfg: dict, model: DiceModel) -> Strategy:
    p = cfg["policy"]
    one = OneParam(float(p["time_to_full"]), float(p["mu0"]))
    savings = ConstantSavings(
        model.params.savings_rate if p["savings"] is None else float(p["savings"]),
        optimize=bool(p["optimize_savings"] or model.params.optimize_savings),
    )
    if p["variant"] == "one-param":
        abatement = one
    elif p["variant"] == "linear-stochastic":
        base = LinearStochastic.matching(one)
        abatement = LinearStochastic(base.a0 if p["a0"] is None else float(p["a0"]), float(p["a1"]), one.mu0)
    else:
        abatement = Piecewise.from_policy(one, model.grid.times[:-1] - model.grid.times[0])
    return Strategy(abatement, savings)


def adam_config(cfg: dict) -> AdamConfig:
    o = cfg["optimizer"]
    return AdamConfig(
        learning_rate=o["learning_rate"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"],
        max_iter=int(o["max_iter"]), grad_tol=o["grad_tol"], decay=o["decay"],
    )


@dataclass
class RunResult:
    config: dict
    model: DiceModel
    strategy: Strategy
    trajectory: Trajectory
    optimization: OptimizeResult | None
    welfare: float


def solve(cfg: dict) -> RunResult:
    """Build, optimize (optionally warm-started through the one-parameter ramp) and simulate."""
    model = build_model(cfg)
    strategy = build_strategy(cfg, model)
    result = None
    if cfg["optimizer"]["enabled"]:
        adam_cfg = adam_config(cfg)
        if cfg["optimizer"]["warm_start"] and not isinstance(strategy.abatement, OneParam):
            ramp = optimize(model, Strategy(OneParam(cfg["policy"]["time_to_full"], cfg["policy"]["mu0"]),
                                            strategy.savings), adam_cfg)
            one = ramp.strategy.abatement
            times = model.grid.times[:-1] - model.grid.times[0]
            if isinstance(strategy.abatement, Piecewise):
                strategy = Strategy(Piecewise.from_policy(one, times), ramp.strategy.savings)
            else:
                strategy = Strategy(LinearStochastic.matching(one), ramp.strategy.savings)
        result = optimize(model, strategy, adam_cfg)
        strategy = result.strategy
    trajectory = model.simulate(strategy)
    return RunResult(cfg, model, strategy, trajectory, result, trajectory.welfare)


# ------------------------------------------------------------------ output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_outputs(res: RunResult, out: Path) -> list[str]:
    cfg = res.config
    files = cfg["outputs"]["files"]
    tr = res.trajectory
    grid = tr.grid
    n = grid.n_steps
    written = []

    if "pathways" in files:
        rows = []
        series = {
            "cost_per_gdp": cost_per_gdp(tr),
            "short_rate": tr.rates.short_rate[:n],
        }
        for q in PATHWAY_QUANTITIES:
            values = series[q] if q in series else tr[q][:n]
            values = np.broadcast_to(values, (n, max(values.shape[1], 1)))
            summary = pathway_summary(values)
            for i in range(n):
                rows.append((i, grid.years[i], q, summary["mean"][i], summary["p10"][i], summary["p90"][i]))
        _write_csv(out / "pathways.csv", ("node", "year", "quantity", "mean", "p10", "p90"), rows)
        written.append("pathways.csv")

    if "cohorts" in files:
        table = LifetimeTable.load(cfg["outputs"]["population_file"] or None)
        years = range(int(cfg["outputs"]["cohort_first"]), int(cfg["outputs"]["cohort_last"]) + 1)
        rows = cohort_burden_table(tr, table, years)
        header = tuple(rows[0]) if rows else ("birth_year",)
        _write_csv(out / "cohorts.csv", header, [tuple(r.values()) for r in rows])
        written.append("cohorts.csv")

    if "gamma_density" in files:
        dens = gamma_densities(res.model, res.strategy, tuple(cfg["outputs"]["gamma_nodes"]))
        rows = [(d.s, t, v) for d in dens for t, v in zip(d.times, d.values)]
        _write_csv(out / "gamma_density.csv", ("s", "t", "gamma"), rows)
        _write_csv(out / "gamma_summary.csv", ("s", "integral", "expected_time", "delay", "mean_delay"),
                   [(d.s, d.integral(), d.expected_time(), d.expected_time() - d.s, d.mean_time() - d.s)
                    for d in dens])
        written += ["gamma_density.csv", "gamma_summary.csv"]

    if "scc" in files:
        sc = social_cost_of_carbon(res.model, res.strategy)
        rows = []
        for name, arr in (("scc", sc.scc), ("scc_numeraire", sc.scc_numeraire)):
            summary = pathway_summary(arr)
            rows += [(i, grid.years[i], name, summary["mean"][i], summary["p10"][i], summary["p90"][i])
                     for i in range(n)]
        _write_csv(out / "scc.csv", ("node", "year", "quantity", "mean", "p10", "p90"), rows)
        written.append("scc.csv")

    if "trace" in files and res.optimization is not None:
        res.optimization.write_trace(out / "trace.csv")
        written.append("trace.csv")

    summary = {
        "name": cfg["name"],
        "welfare": res.welfare,
        "parameters": dict(zip(res.strategy.names, map(float, res.strategy.parameters()))),
        "converged": None if res.optimization is None else bool(res.optimization.converged),
        "iterations": None if res.optimization is None else int(res.optimization.iterations),
        "grad_norm": None if res.optimization is None else float(res.optimization.grad_norm),
        "consumption_floor_hits": tr.floored,
        "truncated_tranches": tr.truncated_tranches,
        "n_paths": tr.n_paths,
    }
    (out / "result.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append("result.json")
    return written


def _versions() -> dict:
    import jax

    from . import __version__

    return {"python": platform.python_version(), "numpy": np.__version__, "jax": jax.__version__,
            "stochdice": __version__}


def _write_manifest(out: Path, cfg: dict, files: list[str], extra: dict | None = None) -> None:
    digest = lambda f: hashlib.sha256((out / f).read_bytes()).hexdigest()
    manifest = {
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "n_paths": cfg["n_paths"],
        "versions": _versions(),
        "config": cfg,
        "outputs": {f: digest(f) for f in files},
        **(extra or {}),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _sweep_label(param: str, value) -> str:
    return f"{param.split('.')[-1]}={_fmt(value)}"


def run_config(cfg: dict, out: Path) -> Path:
    """Run one scenario (or its ``sweep`` table) into ``out`` atomically."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        if cfg["sweep"]["param"]:
            _run_sweep_into(cfg, cfg["sweep"]["param"], list(cfg["sweep"]["values"]), tmp)
        else:
            files = write_outputs(solve(cfg), tmp)
            _write_manifest(tmp, cfg, files)
        if out.exists():
            shutil.rmtree(out)
        tmp.rename(out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out


def _run_sweep_into(cfg: dict, param: str, values: list, out: Path) -> None:
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows = []
    base = copy.deepcopy(cfg)
    base["sweep"] = {"param": "", "values": []}
    configs = [set_by_path(base, param, v) for v in values]
    for sub_cfg in configs:
        validate(sub_cfg)
    for value, sub_cfg in zip(values, configs):
        res = solve(sub_cfg)
        sub = out / _sweep_label(param, value)
        sub.mkdir()
        files = write_outputs(res, sub)
        _write_manifest(sub, sub_cfg, files)
        opt = res.optimization
        rows.append((value, *res.strategy.parameters(), res.welfare,
                     None if opt is None else opt.converged, config_hash(sub_cfg)))
        names = res.strategy.names
    _write_csv(out / "sweep_summary.csv", (param, *names, "welfare", "converged", "config_hash"), rows)
    _write_manifest(out, cfg, ["sweep_summary.csv"], {"sweep": {"param": param, "values": values}})


def sweep_config(cfg: dict, param: str, values: list, out: Path) -> Path:
    cfg = copy.deepcopy(cfg)
    cfg["sweep"] = {"param": param, "values": list(values)}
    if not values:
        raise ConfigError("sweep needs at least one value")
    set_by_path(cfg, param, values[0])
    return run_config(cfg, out)


def bundled_scenarios() -> list[str]:
    root = resources.files("stochdice.scenarios")
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".toml"))


def bundled_scenario(name: str) -> Path:
    name = name if name.endswith(".toml") else name + ".toml"
    return Path(str(resources.files("stochdice.scenarios").joinpath(name)))


RUNTIME_ERRORS = (CalibrationError, FloatingPointError, ArithmeticError, RuntimeError, ValueError)
