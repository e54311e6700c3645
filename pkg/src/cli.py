import argparse
import json
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from src.config import settings
from src.domain.entities import RunConfig, to_complex
from src.exceptions import ConfigException, DivergenceException, OracleToleranceException
from src.simulation.model import validate_params
from src.simulation.moments import output_indices
from src.utils import ensure_directory

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_ORACLE = 4

MODES = ("run", "ncl", "scan", "qswitch", "oracle-compare")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coolsim", description="Non-Markovian sideband cooling simulator")
    ap.add_argument("--config", help="Run configuration JSON; every field optional")
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--out", help="Output directory")
    ap.add_argument("--workers", type=int, help=f"Task runner threads (default: COOLSIM_WORKERS={settings.COOLSIM_WORKERS})")
    ap.add_argument("--dt", type=float)
    ap.add_argument("--t-max", dest="t_max", type=float)
    ap.add_argument("--c1", help="Complex <db^+ da>(0), e.g. 100 or 50+10j")
    ap.add_argument("--c2", help="Complex <db da>(0)")
    ap.add_argument("--nu-i-convention", dest="nu_i_convention", choices=("a", "b"))
    return ap


def load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigException(f"config file not found: {config_path}")
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
        return RunConfig.model_validate(raw)
    except json.JSONDecodeError as e:
        raise ConfigException(f"{config_path} is not valid JSON: {e}") from e
    except ValidationError as e:
        raise ConfigException(f"{config_path} does not validate: {e}") from e


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    data = config.model_dump(mode="json")
    if args.mode is not None:
        data["mode"] = args.mode
    if args.out is not None:
        data["output"]["directory"] = args.out
    if args.workers is not None:
        data["workers"] = args.workers
    if args.dt is not None or args.t_max is not None:
        t_max = args.t_max if args.t_max is not None else config.grid.t_max
        data["grid"] = {"dt": args.dt if args.dt is not None else config.grid.dt, "t_max": t_max}
    try:
        if args.c1 is not None:
            data["params"]["c1"] = to_complex(args.c1)
        if args.c2 is not None:
            data["params"]["c2"] = to_complex(args.c2)
    except ValueError as e:
        raise ConfigException(f"bad complex override: {e}") from e
    if args.nu_i_convention is not None:
        data["analysis"]["nu_i_convention"] = args.nu_i_convention
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigException(f"overrides do not validate: {e}") from e


def check_window(config: RunConfig) -> None:
    t_a, t_b = config.analysis.window
    if t_a < 0 or t_a >= t_b:
        raise ConfigException(f"analysis window ({t_a}, {t_b}) must satisfy 0 <= t_a < t_b")
    times = config.grid.times[output_indices(config.grid, config.output.every)]
    if not np.any((times >= t_a) & (times <= t_b)):
        raise ConfigException(f"no output time up to t={config.grid.t_max:g} lies in the window ({t_a}, {t_b})")


def check_mode_inputs(config: RunConfig) -> None:
    """Inputs the selected flow would otherwise reject halfway through."""
    check_window(config)
    if config.mode == "qswitch":
        if config.qswitch.kappa_hi < 0:
            raise ConfigException(f"qswitch.kappa_hi must be >= 0, got {config.qswitch.kappa_hi}")
        try:
            config.grid.index_of(config.qswitch.t_switch)
        except IndexError as e:
            raise ConfigException(f"qswitch.t_switch: {e}") from e
    elif config.mode == "scan":
        if not config.scan.c1_values or not config.scan.c2_values:
            raise ConfigException("scan.c1_values and scan.c2_values must be non-empty")
    elif config.mode == "oracle-compare":
        oracle = config.oracle
        if oracle.modes < 1 or oracle.omega_max_factor <= 0 or oracle.t_compare <= 0:
            raise ConfigException("oracle needs modes >= 1, omega_max_factor > 0 and t_compare > 0")


def check_config(config: RunConfig) -> None:
    report = validate_params(config.params, config.schedule, config.grid)
    if not report.ok:
        raise ConfigException(f"parameter violations: {', '.join(report.violations)}")
    check_mode_inputs(config)
    try:
        ensure_directory(config.output.directory)
    except OSError as e:
        raise ConfigException(f"output directory {config.output.directory} is not usable: {e}") from e


def resolve_workers(config: RunConfig) -> int:
    return config.workers or settings.COOLSIM_WORKERS


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = apply_overrides(load_run_config(args.config), args)
        check_config(config)
    except ConfigException as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG

    from prefect.task_runners import ThreadPoolTaskRunner

    from flows import FLOWS

    runner = ThreadPoolTaskRunner(max_workers=resolve_workers(config))
    try:
        FLOWS[config.mode].with_options(task_runner=runner)(config=config)
    except ConfigException as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceException as e:
        print(e, file=sys.stderr)
        return EXIT_DIVERGENCE
    except OracleToleranceException as e:
        print(e, file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
