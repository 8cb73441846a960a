"""Command line entry point: ``cellfree {run,sweep,validate,oracle}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
import yaml

from .config import ConfigError, ScenarioConfig, SweepSpec, apply_overrides, config_from_dict
from .runner import OUT_DIR_ENV, SimulationError, run_scenario, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3


def _load(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _build_config(args) -> tuple[ScenarioConfig, dict | None]:
    data = _load(args.config)
    sweep = data.pop("sweep", None)
    config = config_from_dict(data)
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.schemes:
        overrides.append(f"schemes=[{args.schemes}]")
    if overrides:
        config = apply_overrides(config, overrides)
    return config, sweep


def _out_dir(args) -> str | None:
    return args.out or os.environ.get(OUT_DIR_ENV)


def _threads(args) -> int:
    return 1 if args.deterministic else max(1, args.threads)


def cmd_run(args) -> int:
    config, _ = _build_config(args)
    report = run_scenario(config, threads=_threads(args))
    out = _out_dir(args)
    if out:
        report.write(out)
        print(f"wrote {out}", file=sys.stderr)
    sys.stdout.write(report.summary_csv())
    return EXIT_OK


def cmd_sweep(args) -> int:
    config, sweep = _build_config(args)
    sweep = dict(sweep or {})
    axis = args.axis or sweep.get("axis")
    values = sweep.get("values")
    if args.values:
        values = yaml.safe_load(f"[{args.values}]")
    if not axis or not values:
        raise ConfigError("sweep needs an axis and a value list (--axis/--values or a 'sweep:' block)")
    if axis == "area":
        axis = "area_km2"
    if axis not in ("K", "U", "area_km2"):
        raise ConfigError(f"sweep axis must be K, U or area, got {axis!r}")
    spec = SweepSpec(config, axis, tuple(values), _out_dir(args))
    spec.configs()  # validate every point before running
    _, table = run_sweep(spec, threads=_threads(args))
    sys.stdout.write(table)
    return EXIT_OK


def cmd_validate(args) -> int:
    config, sweep = _build_config(args)
    if sweep:
        SweepSpec(config, sweep.get("axis", ""), tuple(sweep.get("values") or ())).configs()
    print(json.dumps({"status": "ok", "config": config.to_dict(), "sweep": sweep}))
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .association import select_aps_by_delta
    from .fronthaul import fronthaul_load, master_cpu_of, relay_sets
    from .oracles import min_subset_reaching, random_instance, relay_load_by_enumeration

    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    mismatches = 0
    for _ in range(args.instances):
        D, ap_to_cpu, beta = random_instance(rng)
        U = int(ap_to_cpu.max()) + 1
        masters = np.array([master_cpu_of(np.flatnonzero(D[k]), ap_to_cpu, beta[k]) for k in range(len(D))])
        load = fronthaul_load(relay_sets(D, masters, ap_to_cpu, U)[2], 4, 200)
        mismatches += load != relay_load_by_enumeration(D, ap_to_cpu, beta, 4, 200)
        g = rng.exponential(1.0, int(rng.integers(1, 13)))
        delta = float(rng.uniform(1, 100))
        mismatches += select_aps_by_delta(np.arange(g.size), g, delta).size != min_subset_reaching(g, delta)
    print(json.dumps({"instances": args.instances, "mismatches": int(mismatches)}))
    return EXIT_OK if mismatches == 0 else EXIT_SIMULATION


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML scenario file")
    common.add_argument("--seed", type=int)
    common.add_argument("--schemes", metavar="LIST", help="comma-separated scheme names")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default: ${OUT_DIR_ENV})")
    common.add_argument("--threads", type=int, default=1, help="worker processes over setups")
    common.add_argument("--deterministic", action="store_true", help="force single-threaded execution")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cellfree", description="Cell-free massive MIMO association simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one scenario").set_defaults(func=cmd_run)
    sw = sub.add_parser("sweep", parents=[common], help="sweep K, U or area")
    sw.add_argument("--axis", choices=["K", "U", "area", "area_km2"])
    sw.add_argument("--values", help="comma-separated axis values")
    sw.set_defaults(func=cmd_sweep)
    sub.add_parser("validate", parents=[common], help="check a config only").set_defaults(func=cmd_validate)
    orc = sub.add_parser("oracle", parents=[common], help="brute-force oracles on tiny random instances")
    orc.add_argument("--instances", type=int, default=50)
    orc.set_defaults(func=cmd_oracle)
    return parser


def _fail(category: str, message: str, code: int) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(ConfigError.category, str(exc), EXIT_CONFIG)
    except (SimulationError, ValueError, np.linalg.LinAlgError) as exc:
        return _fail(SimulationError.category, str(exc), EXIT_SIMULATION)


if __name__ == "__main__":
    sys.exit(main())
