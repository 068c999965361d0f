"""Command line front end: run registry experiments, emit reports.

Configuration comes from an optional JSON file plus flag overrides;
flags win.  Exit codes: 0 all verdicts pass, 1 an assertion failed,
2 configuration problem, 3 numerical breakdown.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

from .errors import (
    AssumptionViolatedError,
    ConfigError,
    DegeneracyError,
    DivergedError,
    NoDichotomyError,
    NotConvergedError,
    NumericalBreakdownError,
    PowerConstraintViolatedError,
)
from .experiments import list_experiments, run_experiment
from .report import write_report

_CONFIG_KEYS = {
    "experiment", "system", "grid", "mc", "epsilons", "output_dir",
    "params", "workers", "dump_paths",
}
_GRID_KEYS = {"horizon", "dt", "n_steps"}
_MC_KEYS = {"n_paths", "master_seed"}

EXIT_PASS = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infolim",
        description="Information rates of continuous-time channels in "
        "estimation and control loops.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one registry experiment")
    run.add_argument("--experiment", help="registry name (see `infolim list`)")
    run.add_argument("--config", help="JSON config file; flags override it")
    run.add_argument("--output-dir", help="artifact directory")
    run.add_argument("--seed", type=int, help="master seed for all randomness")
    run.add_argument("--horizon", type=float, help="time horizon")
    run.add_argument("--dt", type=float, help="time step")
    run.add_argument("--n-paths", type=int, help="Monte Carlo sample paths")
    run.add_argument("--workers", type=int, help="parallel path workers")
    run.add_argument("--alpha", type=float, help="scalar plant gain")
    run.add_argument("--k", type=float, help="scalar feedback gain")
    run.add_argument("--poles", help="comma-separated open-loop poles")
    run.add_argument("--epsilons", help="comma-separated noise scales")
    run.add_argument("--dump-paths", type=int, default=0,
                     help="write the first N sample paths as CSV")

    sub.add_parser("list", help="list registry experiments")
    return parser


def _parse_floats(text: str, flag: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"{flag} expects comma-separated numbers: {exc}")
    if not values:
        raise ConfigError(f"{flag} got an empty list")
    return values


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path}: invalid JSON at line {exc.lineno}, "
            f"column {exc.colno}: {exc.msg}"
        )
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    unknown = sorted(set(cfg) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(
            f"config {path}: unknown field(s) {', '.join(unknown)}; "
            f"accepted: {', '.join(sorted(_CONFIG_KEYS))}"
        )
    for section, allowed in (("grid", _GRID_KEYS), ("mc", _MC_KEYS)):
        block = cfg.get(section)
        if block is None:
            continue
        if not isinstance(block, dict):
            raise ConfigError(f"config {path}: {section!r} must be an object")
        bad = sorted(set(block) - allowed)
        if bad:
            raise ConfigError(
                f"config {path}: unknown {section} field(s) {', '.join(bad)}"
            )
    params = cfg.get("params")
    if params is not None and not isinstance(params, dict):
        raise ConfigError(f"config {path}: 'params' must be an object")
    return cfg


def _merge_overrides(args, cfg: dict) -> dict:
    overrides = dict(cfg.get("params") or {})
    overrides.update(cfg.get("grid") or {})
    overrides.update(cfg.get("mc") or {})
    for key in ("epsilons", "system", "workers"):
        if cfg.get(key) is not None:
            overrides[key] = cfg[key]

    flag_map = {
        "master_seed": args.seed,
        "horizon": args.horizon,
        "dt": args.dt,
        "n_paths": args.n_paths,
        "workers": args.workers,
        "alpha": args.alpha,
        "k": args.k,
    }
    for key, value in flag_map.items():
        if value is not None:
            overrides[key] = value
    if args.poles is not None:
        overrides["pole_sets"] = [_parse_floats(args.poles, "--poles")]
    if args.epsilons is not None:
        overrides["epsilons"] = _parse_floats(args.epsilons, "--epsilons")
    return overrides


def _resolve_output_dir(args, cfg: dict, experiment: str) -> str:
    if args.output_dir:
        return args.output_dir
    if cfg.get("output_dir"):
        return str(cfg["output_dir"])
    env_base = os.environ.get("INFOLIM_OUTPUT_DIR")
    if env_base:
        return os.path.join(env_base, experiment)
    return os.path.join("infolim_out", experiment)


def _cmd_run(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    experiment = args.experiment or cfg.get("experiment")
    if not experiment:
        raise ConfigError(
            "no experiment selected: pass --experiment or set \"experiment\" "
            "in the config file"
        )
    overrides = _merge_overrides(args, cfg)
    result = run_experiment(experiment, overrides)
    dump_paths = args.dump_paths or int(cfg.get("dump_paths") or 0)
    out_dir = _resolve_output_dir(args, cfg, experiment)
    write_report(result, out_dir, dump_paths=dump_paths)

    for v in result.verdicts:
        tag = "PASS" if v.passed else "FAIL"
        print(f"[{tag}] {v.name} (margin {v.margin:.6g}, "
              f"tolerance {v.tolerance:.6g})")
    status = "PASS" if result.passed else "FAIL"
    print(f"{experiment}: {status} "
          f"({sum(v.passed for v in result.verdicts)}/{len(result.verdicts)} "
          f"verdicts, {result.runtime_seconds:.1f}s)")
    print(f"artifacts: {out_dir}")
    if not result.passed:
        failing = next(v.name for v in result.verdicts if not v.passed)
        print(f"failed assertion: {failing}", file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_PASS


def _cmd_list() -> int:
    width = max(len(name) for name, _ in list_experiments())
    for name, description in list_experiments():
        print(f"{name:<{width}}  {description}")
    return EXIT_PASS


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            return _cmd_list()
        return _cmd_run(args)
    except (ConfigError, AssumptionViolatedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PowerConstraintViolatedError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    except (DivergedError, NotConvergedError, NumericalBreakdownError,
            NoDichotomyError, DegeneracyError) as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
