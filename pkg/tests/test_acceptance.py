"""Long runs at the reference operating point. Deselected by default; run with `pytest -m acceptance`."""
import json
import time

import numpy as np
import pandas as pd
import pytest

from src.domain.entities import AnalysisSpec, KappaSchedule, PhysicalParams, RunConfig, TimeGrid
from src.simulation.analysis import (
    N_cl_series,
    orientation,
    prepare_tables,
    run_pipeline,
    run_qswitch,
    scan_correlations,
    scan_point,
)
from src.simulation.bath import SpectralDensity
from src.simulation.meanfield import solve_meanfield
from src.simulation.moments import series_from_integrals
from src.simulation.oracle import clip_window, compare_columns, discretize_bath, evolve_moments, extract_Nb
from src.simulation.propagator import solve_ML

pytestmark = pytest.mark.acceptance

GRID_40 = TimeGrid(dt=0.002, n_steps=20000)
GRID_70 = TimeGrid(dt=0.002, n_steps=35000)
WINDOW = AnalysisSpec(window=(5.0, 40.0))


@pytest.fixture(scope="module")
def tables_40():
    return prepare_tables(PhysicalParams(), KappaSchedule(), GRID_40, every=0.05)


def scan(tables, c1_values, c2_values):
    return [
        scan_point(tables, PhysicalParams(), KappaSchedule(), WINDOW, complex(c1), complex(c2))
        for c1 in c1_values
        for c2 in c2_values
    ]


def test_baseline_instantaneous_minimum(tables_40):
    (row,) = scan(tables_40, [0], [0])
    lo, hi = WINDOW.window
    assert lo < row.t_min <= hi
    assert 0.0 < row.Nb_min < 0.5 * PhysicalParams().m0
    assert 30.0 <= row.t_min <= 40.0
    assert 5.0 <= row.Nb_min <= 20.0


@pytest.mark.parametrize("which", ["c1", "c2"])
def test_correlation_shift_is_linear(tables_40, which):
    p = PhysicalParams()
    baseline = series_from_integrals(tables_40.integrals, p, 0, 0).Nb

    def shift(c):
        kw = {"c1": c, "c2": 0} if which == "c1" else {"c1": 0, "c2": c}
        return series_from_integrals(tables_40.integrals, p, **kw).Nb - baseline

    half, full = shift(50), shift(100)
    assert np.abs(full).max() > 1.0
    np.testing.assert_allclose(full, 2.0 * half, rtol=0, atol=1e-9 * np.abs(full).max())


def test_correlations_move_the_minimum(tables_40):
    rows = scan(tables_40, [0, 100], [0]) + scan(tables_40, [0], [100])
    baseline, beam_splitter, squeezing = rows
    assert beam_splitter.Nb_min != pytest.approx(baseline.Nb_min, rel=1e-3)
    assert squeezing.Nb_min != pytest.approx(baseline.Nb_min, rel=1e-3)


def test_correlation_reduction_lobe():
    traj = solve_meanfield(PhysicalParams(), KappaSchedule(), GRID_70)
    t = GRID_70.times
    per_c1 = N_cl_series(traj, 1 + 0j, 0j)
    assert per_c1.max() > 0
    assert 3.0 <= t[np.argmax(per_c1)] <= 5.0
    assert np.allclose(N_cl_series(traj, 37 + 0j, 0j) / 37.0, per_c1, rtol=1e-12, atol=1e-15)
    assert np.any(N_cl_series(traj, 0j, 1 + 0j) != 0.0)


def test_qswitch_lowers_the_steady_occupation():
    p = PhysicalParams()
    switched = run_qswitch(p, KappaSchedule(), GRID_70, 17.15, 1.0, WINDOW, every=0.25)
    unswitched = run_pipeline(p, KappaSchedule(), GRID_70, WINDOW, every=0.25)
    assert switched.Nb_steady > 0.0
    assert switched.Nb_steady < unswitched.Nb_steady


@pytest.mark.parametrize("c1, c2", [(0, 0), (100, 0), (0, 100)])
def test_kernel_path_matches_finite_bath_oracle(c1, c2):
    p = PhysicalParams(c1=c1, c2=c2)
    sched = KappaSchedule()
    bath = discretize_bath(SpectralDensity.from_params(p), 40.0 * p.omega_l, 600)
    grid = GRID_40.with_t_max(clip_window(bath, 30.0))
    tables = prepare_tables(p, sched, grid, every=0.25)
    kernel = series_from_integrals(tables.integrals, p)
    oracle = extract_Nb(evolve_moments(p, sched, bath, tables.traj, every=0.25, positivity_samples=3))
    assert np.max(compare_columns(kernel, oracle)["abs_rel_diff"]) < 0.02


def halving_factor(values):
    coarse, mid, fine = values
    return abs(coarse - mid) / abs(mid - fine)


def test_step_halving_order():
    p = PhysicalParams()
    betas, ms = [], []
    for dt in (0.01, 0.005, 0.0025):
        grid = TimeGrid.model_validate({"dt": dt, "t_max": 10.0})
        memory = SpectralDensity.from_params(p).memory_kernel(grid.times)
        traj = solve_meanfield(p, KappaSchedule(), grid, memory)
        betas.append(traj.beta[-1])
        ms.append(abs(solve_ML(traj, memory).M[-1]))
    assert halving_factor(betas) >= 3.5
    assert halving_factor(ms) >= 3.5


def test_results_do_not_depend_on_worker_count(tmp_path):
    from prefect.task_runners import ThreadPoolTaskRunner
    from prefect.testing.utilities import prefect_test_harness

    from flows import cooling_run

    outputs = []
    with prefect_test_harness():
        for workers in (1, 4):
            out = tmp_path / f"w{workers}"
            config = RunConfig(
                grid=TimeGrid(dt=0.01, n_steps=2000),
                analysis=AnalysisSpec(window=(0.0, 20.0)),
                output={"directory": str(out)},
            )
            cooling_run.with_options(task_runner=ThreadPoolTaskRunner(max_workers=workers))(config=config)
            outputs.append((out / "nb.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_scan_rows_follow_input_order():
    rows, best = scan_correlations(
        PhysicalParams(), KappaSchedule(), TimeGrid(dt=0.01, n_steps=2000), [100, 0], [0], AnalysisSpec(window=(0.0, 20.0)), 0.25
    )
    assert [r.c1 for r in rows] == [100, 0]
    assert best in rows


def test_cli_run_writes_outputs(tmp_path):
    from prefect.testing.utilities import prefect_test_harness

    from src.cli import EXIT_OK, run

    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"grid": {"dt": 0.01, "t_max": 10.0}, "analysis": {"window": [0.0, 10.0]}}))
    with prefect_test_harness():
        code = run(["--config", str(config_path), "--out", str(tmp_path / "out"), "--workers", "2"])
    assert code == EXIT_OK
    nb = pd.read_csv(tmp_path / "out" / "nb.csv")
    assert list(nb.columns[:2]) == ["t", "N_b"]
    assert nb["N_b"].iloc[0] == pytest.approx(100.0)
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["config"]["grid"]["n_steps"] == 1000
    assert "timing_seconds" in report


def test_oracle_converges_with_modes():
    p = PhysicalParams()
    sched = KappaSchedule()
    J = SpectralDensity.from_params(p)
    baths = [discretize_bath(J, 40.0 * p.omega_l, K) for K in (150, 300, 600)]
    grid = TimeGrid(dt=0.01, n_steps=1).with_t_max(clip_window(baths[0], 30.0))
    traj = solve_meanfield(p, sched, grid, J.memory_kernel(grid.times))
    coarse, mid, fine = (
        extract_Nb(evolve_moments(p, sched, bath, traj, every=0.05, positivity_samples=0)).Nb for bath in baths
    )
    assert np.linalg.norm(fine - mid) <= 0.5 * np.linalg.norm(mid - coarse)


def test_scan_point_is_cheap_next_to_a_cold_run():
    p, sched = PhysicalParams(), KappaSchedule()
    grid = TimeGrid(dt=0.002, n_steps=10000)
    orientation(WINDOW.nu_i_convention)

    started = time.perf_counter()
    tables = prepare_tables(p, sched, grid, every=0.05)
    scan_point(tables, p, sched, WINDOW, 0j, 0j)
    cold = time.perf_counter() - started

    points = [(c1, c2) for c1 in (0, 50, 100) for c2 in (0, 50, 100)]
    started = time.perf_counter()
    for c1, c2 in points:
        scan_point(tables, p, sched, WINDOW, complex(c1), complex(c2))
    per_point = (time.perf_counter() - started) / len(points)
    assert per_point <= 0.1 * cold
