import time

import numpy as np
from importlib_metadata import PackageNotFoundError, version
from prefect import flow, get_run_logger, task, unmapped
from prefect.artifacts import create_markdown_artifact
from prefect.cache_policies import NO_CACHE
from prefect.variables import Variable

from src.config import settings
from src.domain.entities import RunConfig
from src.exceptions import OracleToleranceException
from src.simulation.analysis import (
    CoolingReport,
    SharedTables,
    build_report,
    ncl_columns,
    pareto_best,
    scan_columns,
    scan_grid,
    scan_point,
)
from src.simulation.bath import SpectralDensity, build_kernel_table
from src.simulation.meanfield import resolve_detuning, solve_meanfield, steady_state, meanfield_columns
from src.simulation.model import gaussian_physicality, initial_phonons, validate_params
from src.simulation.moments import concat_integrals, output_indices, phonon_columns, precompute_integrals
from src.simulation.oracle import (
    clip_window,
    compare_columns,
    discretize_bath,
    evolve_moments,
    extract_Nb,
    fundamental_solution,
    photon_number,
    relative_l2,
)
from src.simulation.propagator import solve_ML
from src.utils import chunked_by_num_chunks, ensure_directory, generate_markdown_table, write_json, write_table


def get_batch_num() -> int:
    try:
        return int(Variable.get("coolsim-batch-num", default=settings.COOLSIM_BATCH_NUM))
    except Exception as e:
        get_run_logger().warning(f"Could not read 'coolsim-batch-num': {e}. Using {settings.COOLSIM_BATCH_NUM}")
        return settings.COOLSIM_BATCH_NUM


def get_code_version() -> str:
    try:
        return version("coolsim")
    except PackageNotFoundError:
        return "unknown"


@task(cache_policy=NO_CACHE)
def build_kernels(config: RunConfig):
    p = config.params
    return build_kernel_table(SpectralDensity.from_params(p), p.occupation, config.grid)


@task(cache_policy=NO_CACHE, log_prints=True)
def solve_meanfield_task(config: RunConfig, memory: np.ndarray):
    return solve_meanfield(config.params, config.schedule, config.grid, memory)


@task(cache_policy=NO_CACHE, log_prints=True)
def solve_ml_task(traj, memory: np.ndarray, omega_m: float):
    return solve_ML(traj, memory, omega_m)


@task(cache_policy=NO_CACHE)
def integrals_batch(pair, traj, kernels, indices: list[int]):
    return precompute_integrals(pair, traj, kernels, indices)


@task(cache_policy=NO_CACHE)
def scan_point_task(tables: SharedTables, config: RunConfig, c1: complex, c2: complex):
    return scan_point(tables, config.params, config.schedule, config.analysis, c1, c2)


def compute_tables(config: RunConfig) -> SharedTables:
    """Kernels, mean field and M/L in sequence, then the per-output integrals in mapped batches."""
    logger = get_run_logger()
    kernels = build_kernels(config)
    traj = solve_meanfield_task(config, kernels.memory)
    pair = solve_ml_task(traj, kernels.memory, config.params.omega_m)

    indices = output_indices(config.grid, config.output.every).tolist()
    batch_num = max(1, min(get_batch_num(), len(indices)))
    batches = [b for b in chunked_by_num_chunks(indices, batch_num) if b]
    logger.info(f"Assembling N_b at {len(indices)} output times in {len(batches)} batches")
    parts = integrals_batch.map(unmapped(pair), unmapped(traj), unmapped(kernels), batches).result()
    return SharedTables(traj=traj, kernels=kernels, pair=pair, integrals=concat_integrals(parts))


def effective_parameters(config: RunConfig) -> dict:
    p, sched = config.params, config.schedule
    delta_c = resolve_detuning(p, sched)
    alpha_ss, beta_ss = steady_state(p, sched.base, delta_c)
    J = SpectralDensity.from_params(p)
    return {
        "delta_c": delta_c,
        "alpha_ss": alpha_ss,
        "beta_ss": beta_ss,
        "abs_G_ss": abs(p.g0 * alpha_ss),
        "delta_eff_ss": delta_c - 2.0 * p.g0 * beta_ss.real,
        "bath_static_shift": 2.0 * J.static_shift,
        "kappa_over_omega_m": sched.base / p.omega_m,
        "m0": initial_phonons(p),
    }


def base_report(config: RunConfig) -> dict:
    p = config.params
    physicality = gaussian_physicality(p.n0, initial_phonons(p), p.c1, p.c2)
    validation = validate_params(p, config.schedule, config.grid)
    return {
        "config": config.model_dump(mode="json"),
        "code_version": get_code_version(),
        "effective": effective_parameters(config),
        "physicality": {
            "checks": physicality.checks,
            "min_eigenvalue": physicality.min_eigenvalue,
            "warning": not physicality.passed,
        },
        "validation_warnings": validation.warnings,
    }


def cooling_summary(report: CoolingReport, omega_m_hz: float | None) -> dict:
    summary = {
        "t_min": report.t_min,
        "Nb_min": report.Nb_min,
        "t_min_refined": report.t_min_refined,
        "Nb_min_refined": report.Nb_min_refined,
        "Nb_steady": report.Nb_steady,
        "steady_flat": report.steady_flat,
        "max_imag_residue": float(np.max(np.abs(report.Nb.imag_residue), initial=0.0)),
    }
    if omega_m_hz:
        summary["t_min_seconds"] = report.t_min / omega_m_hz
        summary["t_min_refined_seconds"] = report.t_min_refined / omega_m_hz
    return summary


def publish_summary(key: str, rows: list[dict], description: str):
    create_markdown_artifact(key=key, markdown=generate_markdown_table(rows), description=description)


@flow(flow_run_name="Cooling run: t_max={config.grid.t_max}", log_prints=True)
def cooling_run(config: RunConfig) -> dict:
    logger = get_run_logger()
    started = time.perf_counter()
    out = ensure_directory(config.output.directory)
    payload = base_report(config)
    if payload["physicality"]["warning"]:
        logger.warning(f"Initial state is not a legal Gaussian state: {payload['physicality']['checks']}")

    tables = compute_tables(config)
    report = build_report(tables, config.params, config.schedule, config.analysis)
    stride = config.grid.stride_for(config.output.every)
    write_table(phonon_columns(report.Nb), out / "nb.csv")
    write_table(meanfield_columns(tables.traj, stride), out / "meanfield.csv")

    payload["result"] = cooling_summary(report, config.output.omega_m_hz)
    payload["timing_seconds"] = time.perf_counter() - started
    write_json(payload, out / "report.json")
    publish_summary("cooling-run", [payload["result"]], "Instantaneous minimum and tail average of N_b")
    logger.info(f"t_min={report.t_min:.4g}, N_b_min={report.Nb_min:.4g}, N_b_steady={report.Nb_steady:.4g}")
    return payload


@flow(flow_run_name="N_cl series", log_prints=True)
def ncl_series(config: RunConfig) -> dict:
    started = time.perf_counter()
    out = ensure_directory(config.output.directory)
    payload = base_report(config)

    kernels = build_kernels(config)
    traj = solve_meanfield_task(config, kernels.memory)
    stride = config.grid.stride_for(config.output.every)
    columns = ncl_columns(traj, config.params.c1, config.params.c2, config.analysis.nu_i_convention, stride)
    write_table(columns, out / "ncl.csv")

    per_c1, per_c2 = columns["N_cl_per_c1"], columns["N_cl_per_c2"]
    payload["result"] = {
        "t_max_per_c1": float(columns["t"][np.argmax(per_c1)]),
        "max_per_c1": float(per_c1.max()),
        "t_min_per_c2": float(columns["t"][np.argmin(per_c2)]),
        "min_per_c2": float(per_c2.min()),
    }
    payload["timing_seconds"] = time.perf_counter() - started
    write_json(payload, out / "report.json")
    publish_summary("ncl-series", [payload["result"]], "Extrema of the correlation-induced phonon reduction")
    return payload


@flow(flow_run_name="Correlation scan", log_prints=True)
def correlation_scan(config: RunConfig) -> dict:
    logger = get_run_logger()
    started = time.perf_counter()
    out = ensure_directory(config.output.directory)
    payload = base_report(config)

    points = scan_grid(config.scan.c1_values, config.scan.c2_values)
    tables = compute_tables(config)
    c1s = [c1 for c1, _ in points]
    c2s = [c2 for _, c2 in points]
    rows = scan_point_task.map(unmapped(tables), unmapped(config), c1s, c2s).result()
    best = pareto_best(rows)
    write_table(scan_columns(rows), out / "scan.csv")
    write_json(
        {"config": config.model_dump(mode="json"), "code_version": get_code_version(),
         "grid": {"dt": config.grid.dt, "n_steps": config.grid.n_steps, "t_max": config.grid.t_max},
         "points": len(rows)},
        out / "scan.json",
    )

    payload["result"] = {"best": vars(best), "rows": [vars(r) for r in rows]}
    payload["timing_seconds"] = time.perf_counter() - started
    write_json(payload, out / "report.json")
    publish_summary("correlation-scan", [scan_row_dict(r) for r in rows], "t_min and N_b_min per (c1, c2)")
    logger.info(f"Best point: c1={best.c1}, c2={best.c2}, t_min={best.t_min:.4g}, N_b_min={best.Nb_min:.4g}")
    return payload


def scan_row_dict(row) -> dict:
    return {"c1": str(row.c1), "c2": str(row.c2), "t_min": row.t_min, "N_b_min": row.Nb_min, "N_b_steady": row.Nb_steady}


@flow(flow_run_name="Q-switch at t={config.qswitch.t_switch}", log_prints=True)
def qswitch_run(config: RunConfig) -> dict:
    started = time.perf_counter()
    config.grid.index_of(config.qswitch.t_switch)
    switched = config.model_copy(
        update={"schedule": config.schedule.qswitch(config.schedule.base, config.qswitch.t_switch, config.qswitch.kappa_hi)}
    )
    out = ensure_directory(config.output.directory)
    payload = base_report(switched)

    tables = compute_tables(switched)
    report = build_report(tables, switched.params, switched.schedule, switched.analysis)
    write_table(phonon_columns(report.Nb), out / "qswitch.csv")

    payload["result"] = cooling_summary(report, config.output.omega_m_hz)
    payload["timing_seconds"] = time.perf_counter() - started
    write_json(payload, out / "report.json")
    publish_summary("qswitch-run", [payload["result"]], "N_b after the cavity-loss switch")
    return payload


@flow(flow_run_name="Oracle compare: K={config.oracle.modes}", log_prints=True)
def oracle_compare(config: RunConfig) -> dict:
    logger = get_run_logger()
    started = time.perf_counter()
    out = ensure_directory(config.output.directory)
    p = config.params
    J = SpectralDensity.from_params(p)
    bath = discretize_bath(J, config.oracle.omega_max_factor * p.omega_l, config.oracle.modes)
    requested = min(config.oracle.t_compare, config.grid.t_max)
    window = clip_window(bath, requested)
    clipped = config.model_copy(update={"grid": config.grid.with_t_max(window)})
    payload = base_report(clipped)

    tables = compute_tables(clipped)
    kernel = build_report(tables, p, clipped.schedule, clipped.analysis).Nb
    moments = evolve_moments(
        p, clipped.schedule, bath, tables.traj,
        every=clipped.output.every, positivity_samples=clipped.oracle.positivity_samples,
    )
    oracle = extract_Nb(moments)
    columns = compare_columns(kernel, oracle)
    columns["nu_oracle"] = moments.nu
    columns["N_a_oracle"] = photon_number(moments)
    write_table(columns, out / "oracle_diff.csv")

    fundamental = fundamental_solution(p, clipped.schedule, bath, tables.traj)
    deviation = float(np.max(columns["abs_rel_diff"]))
    payload["result"] = {
        "requested_window": requested,
        "window": window,
        "window_clipped": window < requested,
        "modes": bath.K,
        "max_abs_rel_diff": deviation,
        "tolerance": config.oracle.tolerance,
        "M_rel_l2": relative_l2(tables.pair.M, fundamental.M),
        "L_rel_l2": relative_l2(tables.pair.L, fundamental.L),
        "positivity_min_eigenvalues": moments.min_eigenvalues,
    }
    payload["timing_seconds"] = time.perf_counter() - started
    write_json(payload, out / "report.json")
    publish_summary(
        "oracle-compare",
        [{k: payload["result"][k] for k in ("window", "modes", "max_abs_rel_diff", "M_rel_l2", "L_rel_l2")}],
        "Kernel path against the finite-bath moment oracle",
    )
    logger.info(f"Oracle deviation {deviation:.4g} on [0, {window:.4g}] (tolerance {config.oracle.tolerance:g})")
    if deviation > config.oracle.tolerance:
        raise OracleToleranceException(deviation, config.oracle.tolerance)
    return payload


FLOWS = {
    "run": cooling_run,
    "ncl": ncl_series,
    "scan": correlation_scan,
    "qswitch": qswitch_run,
    "oracle-compare": oracle_compare,
}


if __name__ == "__main__":
    from src.cli import main

    main()
