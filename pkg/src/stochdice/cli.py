"""Command line entry point: ``stochdice run`` and ``stochdice sweep``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import tomli

from .experiment import (
    RUNTIME_ERRORS,
    ConfigError,
    bundled_scenario,
    bundled_scenarios,
    load_config,
    run_config,
    sweep_config,
    validate,
)

log = logging.getLogger("stochdice")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parse_value(text: str):
    """A sweep value as TOML would read it (number, bool or bare string)."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def parse_values(text: str) -> list:
    values = [_parse_value(v.strip()) for v in text.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values needs at least one value")
    return values


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.exists() and not p.suffix and bundled_scenario(path).exists():
        return bundled_scenario(path)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochdice", description="Run DICE scenarios with stochastic rates.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario TOML file, or the name of a bundled scenario")
        p.add_argument("--paths", type=int, help="number of Monte Carlo paths")
        p.add_argument("--seed", type=int, help="seed of the Brownian increments")
        p.add_argument("--out", default=None, help="output directory (default: ./out/<name>)")

    common(sub.add_parser("run", help="run one scenario (or its sweep table)"))
    sw = sub.add_parser("sweep", help="run a scenario once per value of one parameter")
    common(sw)
    sw.add_argument("--param", required=True, help="dotted config key, e.g. rates.volatility")
    sw.add_argument("--values", required=True, help="comma separated values")
    sub.add_parser("list", help="list bundled scenarios")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "list":
        print("\n".join(bundled_scenarios()))
        return EXIT_OK
    try:
        cfg = load_config(_resolve(args.scenario))
        if args.paths is not None:
            cfg["n_paths"] = args.paths
        if args.seed is not None:
            cfg["seed"] = args.seed
        validate(cfg)
        out = Path(args.out) if args.out else Path("out") / cfg["name"]
        if args.command == "sweep":
            done = sweep_config(cfg, args.param, parse_values(args.values), out)
        else:
            done = run_config(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RUNTIME_ERRORS as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(done)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
