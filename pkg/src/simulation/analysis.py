"""Cooling-rate diagnostics, instantaneous minima, the Q-switch driver and correlation scans."""
import itertools
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy.integrate import cumulative_trapezoid

from src.domain.entities import AnalysisSpec, KappaSchedule, PhysicalParams, TimeGrid
from src.simulation.bath import KernelTable, SpectralDensity, build_kernel_table
from src.simulation.meanfield import MeanFieldTrajectory, solve_meanfield
from src.simulation.moments import (
    OutputIntegrals,
    PhononSeries,
    output_indices,
    precompute_integrals,
    series_from_integrals,
)
from src.simulation.propagator import PropagatorPair, solve_ML
from src.utils import get_logger

Convention = Literal["a", "b"]

CALIBRATION_GRID = TimeGrid(dt=0.01, n_steps=6000)
STEADY_FRACTION = 0.1
FLATNESS = 0.05


@dataclass(frozen=True)
class CoolingReport:
    Nb: PhononSeries
    nu: np.ndarray
    Ncl: np.ndarray
    t_min: float
    Nb_min: float
    t_min_refined: float
    Nb_min_refined: float
    Nb_steady: float
    steady_flat: bool
    params_echo: PhysicalParams
    schedule_echo: KappaSchedule


@dataclass(frozen=True)
class SharedTables:
    """c-independent state of one (params, schedule, grid) run: reused by every scan point."""

    traj: MeanFieldTrajectory
    kernels: KernelTable
    pair: PropagatorPair
    integrals: OutputIntegrals


@dataclass(frozen=True)
class ScanRow:
    c1: complex
    c2: complex
    t_min: float
    Nb_min: float
    Nb_steady: float


def _raw_nu_i(traj: MeanFieldTrajectory, c1: complex, c2: complex, convention: Convention) -> np.ndarray:
    G = traj.G
    e1 = np.exp(traj.u1)
    if convention == "a":
        return -np.imag(G * (c1 * e1 + np.conj(c2) * np.exp(np.conj(traj.u2))))
    if convention == "b":
        return 2.0 * np.imag(G * (c1 * e1 + np.conj(c2) * np.exp(traj.u2)))
    raise ValueError(f"unknown nu_i convention {convention!r}")


@lru_cache(maxsize=None)
def orientation(convention: Convention) -> float:
    """+1 or -1, fixed so that N_cl for c1 = 1, c2 = 0 has a positive main lobe at the default parameters."""
    traj = solve_meanfield(PhysicalParams(), KappaSchedule(), CALIBRATION_GRID)
    ncl = cumulative_trapezoid(_raw_nu_i(traj, 1.0, 0.0, convention), dx=CALIBRATION_GRID.dt, initial=0.0)
    sign = 1.0 if ncl.max() >= -ncl.min() else -1.0
    get_logger().info(f"nu_i convention {convention!r} oriented with sign {sign:+.0f}")
    return sign


def nu_i_series(
    traj: MeanFieldTrajectory, c1: complex, c2: complex, convention: Convention = "a"
) -> np.ndarray:
    """Correlation-sourced part of the cooling rate on the full grid."""
    c1, c2 = complex(c1), complex(c2)
    if c1 == 0 and c2 == 0:
        return np.zeros(traj.grid.n_steps + 1)
    return orientation(convention) * _raw_nu_i(traj, c1, c2, convention)


def nu_i(t: float, traj: MeanFieldTrajectory, c1: complex, c2: complex, convention: Convention = "a") -> float:
    return float(nu_i_series(traj, c1, c2, convention)[traj.grid.index_of(t)])


def N_cl_series(
    traj: MeanFieldTrajectory, c1: complex, c2: complex, convention: Convention = "a"
) -> np.ndarray:
    return cumulative_trapezoid(nu_i_series(traj, c1, c2, convention), dx=traj.grid.dt, initial=0.0)


def N_cl(t: float, traj: MeanFieldTrajectory, c1: complex, c2: complex, convention: Convention = "a") -> float:
    return float(N_cl_series(traj, c1, c2, convention)[traj.grid.index_of(t)])


def cooling_rate_numeric(series: PhononSeries) -> np.ndarray:
    """dN_b/dt: centered differences inside, one-sided at the ends."""
    if series.times.size < 3:
        raise ValueError("cooling_rate_numeric: need at least 3 output points")
    return np.gradient(series.Nb, series.times, edge_order=1)


def find_instant_min(series: PhononSeries, window: tuple[float, float]) -> tuple[float, float]:
    """Grid argmin of N_b inside `window`; ties go to the earliest time."""
    t_a, t_b = window
    inside = np.flatnonzero((series.times >= t_a) & (series.times <= t_b))
    if inside.size == 0:
        raise ValueError(f"find_instant_min: no output time inside window {window}")
    j = inside[np.argmin(series.Nb[inside])]
    return float(series.times[j]), float(series.Nb[j])


def refine_minimum(series: PhononSeries, t_min: float) -> tuple[float, float]:
    """Vertex of the parabola through the argmin and its two neighbours."""
    j = int(np.argmin(np.abs(series.times - t_min)))
    if j == 0 or j == series.times.size - 1:
        return float(series.times[j]), float(series.Nb[j])
    t3, y3 = series.times[j - 1: j + 2], series.Nb[j - 1: j + 2]
    curvature, slope, offset = np.polyfit(t3, y3, 2)
    if curvature <= 0:
        return float(series.times[j]), float(series.Nb[j])
    t_v = -slope / (2.0 * curvature)
    return float(t_v), float(offset - slope**2 / (4.0 * curvature))


def tail_steady_state(series: PhononSeries, fraction: float = STEADY_FRACTION) -> tuple[float, bool]:
    """(mean over the final `fraction` of samples, flat?) with flat meaning max - min < 5% of the mean."""
    n_tail = max(1, int(np.ceil(fraction * series.Nb.size)))
    tail = series.Nb[-n_tail:]
    mean = float(np.mean(tail))
    flat = bool(np.ptp(tail) < FLATNESS * abs(mean))
    return mean, flat


def prepare_tables(
    p: PhysicalParams, sched: KappaSchedule, grid: TimeGrid, every: float
) -> SharedTables:
    logger = get_logger()
    started = time.perf_counter()
    kernels = build_kernel_table(SpectralDensity.from_params(p), p.occupation, grid)
    traj = solve_meanfield(p, sched, grid, kernels.memory)
    pair = solve_ML(traj, kernels.memory, p.omega_m)
    integrals = precompute_integrals(pair, traj, kernels, output_indices(grid, every))
    logger.info(f"Shared tables ready in {time.perf_counter() - started:.2f}s")
    return SharedTables(traj=traj, kernels=kernels, pair=pair, integrals=integrals)


def build_report(
    tables: SharedTables,
    p: PhysicalParams,
    sched: KappaSchedule,
    analysis: AnalysisSpec,
    c1: complex | None = None,
    c2: complex | None = None,
) -> CoolingReport:
    c1 = p.c1 if c1 is None else complex(c1)
    c2 = p.c2 if c2 is None else complex(c2)
    series = series_from_integrals(tables.integrals, p, c1, c2)
    t_min, nb_min = find_instant_min(series, analysis.window)
    t_ref, nb_ref = refine_minimum(series, t_min) if analysis.refine_min else (t_min, nb_min)
    steady, flat = tail_steady_state(series)
    ncl = N_cl_series(tables.traj, c1, c2, analysis.nu_i_convention)[tables.integrals.indices]
    return CoolingReport(
        Nb=series,
        nu=cooling_rate_numeric(series),
        Ncl=ncl,
        t_min=t_min,
        Nb_min=nb_min,
        t_min_refined=t_ref,
        Nb_min_refined=nb_ref,
        Nb_steady=steady,
        steady_flat=flat,
        params_echo=p,
        schedule_echo=sched,
    )


def run_pipeline(
    p: PhysicalParams, sched: KappaSchedule, grid: TimeGrid, analysis: AnalysisSpec, every: float
) -> CoolingReport:
    """Mean field, M/L and N_b, followed by the analysis of the resulting series."""
    return build_report(prepare_tables(p, sched, grid, every), p, sched, analysis)


def run_qswitch(
    p: PhysicalParams,
    sched: KappaSchedule,
    grid: TimeGrid,
    t_switch: float,
    kappa_hi: float,
    analysis: AnalysisSpec,
    every: float,
) -> CoolingReport:
    if kappa_hi < 0:
        raise ValueError("run_qswitch: kappa_hi must be >= 0")
    grid.index_of(t_switch)
    switched = KappaSchedule.qswitch(sched.base, t_switch, kappa_hi)
    return run_pipeline(p, switched, grid, analysis, every)


def scan_point(
    tables: SharedTables, p: PhysicalParams, sched: KappaSchedule, analysis: AnalysisSpec, c1: complex, c2: complex
) -> ScanRow:
    report = build_report(tables, p, sched, analysis, c1, c2)
    t_min = report.t_min_refined if analysis.refine_min else report.t_min
    nb_min = report.Nb_min_refined if analysis.refine_min else report.Nb_min
    return ScanRow(c1=complex(c1), c2=complex(c2), t_min=t_min, Nb_min=nb_min, Nb_steady=report.Nb_steady)


def scan_grid(c1_values, c2_values) -> list[tuple[complex, complex]]:
    """(c1, c2) pairs, c1 outer and c2 inner."""
    if not c1_values or not c2_values:
        raise ValueError("scan_correlations: c1_values and c2_values must be non-empty")
    return [(complex(a), complex(b)) for a, b in itertools.product(c1_values, c2_values)]


def pareto_best(rows: list[ScanRow]) -> ScanRow:
    """Earliest t_min, then lowest N_b at the minimum."""
    return min(rows, key=lambda r: (r.t_min, r.Nb_min))


def scan_correlations(
    p: PhysicalParams,
    sched: KappaSchedule,
    grid: TimeGrid,
    c1_values,
    c2_values,
    analysis: AnalysisSpec,
    every: float,
) -> tuple[list[ScanRow], ScanRow]:
    points = scan_grid(c1_values, c2_values)
    tables = prepare_tables(p, sched, grid, every)
    rows = [scan_point(tables, p, sched, analysis, c1, c2) for c1, c2 in points]
    return rows, pareto_best(rows)


def scan_columns(rows: list[ScanRow]) -> dict[str, np.ndarray]:
    return {
        "re_c1": np.array([r.c1.real for r in rows]),
        "im_c1": np.array([r.c1.imag for r in rows]),
        "re_c2": np.array([r.c2.real for r in rows]),
        "im_c2": np.array([r.c2.imag for r in rows]),
        "t_min": np.array([r.t_min for r in rows]),
        "N_b_min": np.array([r.Nb_min for r in rows]),
        "N_b_steady": np.array([r.Nb_steady for r in rows]),
    }


def ncl_columns(traj: MeanFieldTrajectory, c1: complex, c2: complex, convention: Convention, stride: int) -> dict:
    """N_cl per unit correlation for each channel, plus the combined N_cl of (c1, c2)."""
    sl = slice(None, None, stride)
    return {
        "t": traj.grid.times[sl],
        "N_cl": N_cl_series(traj, c1, c2, convention)[sl],
        "N_cl_per_c1": N_cl_series(traj, 1.0, 0.0, convention)[sl],
        "N_cl_per_c2": N_cl_series(traj, 0.0, 1.0, convention)[sl],
    }
