import numpy as np
import pytest
from scipy.linalg import toeplitz

from src.domain.entities import KappaSchedule, Occupation, PhysicalParams, TimeGrid
from src.simulation.bath import SpectralDensity, build_kernel_table
from src.simulation.meanfield import solve_meanfield
from src.simulation.moments import (
    assemble_Nb,
    concat_integrals,
    f1,
    f2,
    f_ini,
    output_indices,
    phonon_columns,
    precompute_integrals,
    series_from_integrals,
)
from src.simulation.propagator import solve_ML


def run_tables(p: PhysicalParams, grid: TimeGrid, sched: KappaSchedule | None = None):
    sched = sched or KappaSchedule()
    kernels = build_kernel_table(SpectralDensity.from_params(p), p.occupation, grid)
    traj = solve_meanfield(p, sched, grid, kernels.memory)
    pair = solve_ML(traj, kernels.memory)
    return traj, kernels, pair


@pytest.fixture(scope="module")
def default_tables():
    grid = TimeGrid(dt=0.01, n_steps=500)
    return (PhysicalParams(), grid) + run_tables(PhysicalParams(), grid)


def test_initial_phonon_number(default_tables):
    p, grid, traj, kernels, pair = default_tables
    series = assemble_Nb(pair, traj, p, kernels, [0, 100])
    assert series.Nb[0] == pytest.approx(100.0, abs=1e-12)


def test_decoupled_oscillator_keeps_its_phonons(free_params):
    grid = TimeGrid(dt=0.01, n_steps=300)
    traj, kernels, pair = run_tables(free_params, grid)
    series = assemble_Nb(pair, traj, free_params, kernels, output_indices(grid, 0.25))
    assert np.allclose(series.Nb, 2.0, rtol=0, atol=1e-8)


def test_correlations_enter_linearly(default_tables):
    p, grid, traj, kernels, pair = default_tables
    integrals = precompute_integrals(pair, traj, kernels, output_indices(grid, 0.5))
    base = series_from_integrals(integrals, p, 0j, 0j).Nb
    once = series_from_integrals(integrals, p, 30 + 5j, 10 - 2j).Nb
    twice = series_from_integrals(integrals, p, 60 + 10j, 20 - 4j).Nb
    assert np.allclose(twice - base, 2.0 * (once - base), rtol=1e-8, atol=1e-12)


def test_assembled_value_is_real_to_roundoff(default_tables):
    p, grid, traj, kernels, pair = default_tables
    series = assemble_Nb(pair, traj, p, kernels, output_indices(grid, 0.5))
    assert np.all(np.abs(series.imag_residue) < 1e-10 * (1.0 + np.abs(series.Nb)))


def test_physical_initial_state_stays_nonnegative(default_tables):
    p, grid, traj, kernels, pair = default_tables
    series = assemble_Nb(pair, traj, p, kernels, output_indices(grid, 0.25))
    assert np.all(series.Nb >= 0.0)
    assert series.Nb[-1] < series.Nb[0]


def test_components_sum_to_total(default_tables):
    p, grid, traj, kernels, pair = default_tables
    series = assemble_Nb(pair, traj, p, kernels, output_indices(grid, 1.0))
    total = sum(series.components.values())
    assert np.allclose(total, series.Nb, rtol=1e-14, atol=0)
    assert set(series.components) == {"initial", "photon", "input_noise", "thermal", "correlation"}


def test_batches_concatenate_to_the_full_run(default_tables):
    p, grid, traj, kernels, pair = default_tables
    indices = output_indices(grid, 0.25)
    whole = precompute_integrals(pair, traj, kernels, indices)
    parts = [precompute_integrals(pair, traj, kernels, chunk) for chunk in np.array_split(indices, 3)]
    joined = concat_integrals(parts)
    assert np.array_equal(joined.A, whole.A)
    assert np.array_equal(joined.B, whole.B)
    assert np.array_equal(joined.thermal, whole.thermal)
    assert np.array_equal(joined.input_noise, whole.input_noise)


def test_thermal_term_matches_dense_double_sum(default_tables):
    p, grid, traj, kernels, pair = default_tables
    n = 120
    integrals = precompute_integrals(pair, traj, kernels, [n])
    h = (pair.M - np.conj(pair.L))[n::-1]
    w = np.full(n + 1, grid.dt)
    w[0] = w[-1] = 0.5 * grid.dt
    column = kernels.thermal[: n + 1]
    T = toeplitz(column, np.conj(column))
    dense = np.conj(w * h) @ T @ (w * h)
    assert integrals.thermal[0] == pytest.approx(dense.real, rel=1e-10)


def test_input_noise_matches_double_integral(default_tables):
    p, grid, traj, kernels, pair = default_tables
    n = 400
    integrals = precompute_integrals(pair, traj, kernels, [n])
    h = (pair.M - np.conj(pair.L))[n::-1]
    a = np.conj(traj.G[: n + 1]) * np.exp(-traj.phase_accum[: n + 1])
    K = traj.kappa_int[: n + 1]
    w = np.full(n + 1, grid.dt)
    w[0] = w[-1] = 0.5 * grid.dt
    kernel = np.expm1(np.minimum.outer(K, K))
    u = w * np.conj(h) * a
    v = w * h * np.conj(a)
    dense = (u @ kernel @ v).real
    assert integrals.input_noise[0] == pytest.approx(dense, rel=1e-2)


def test_grid_mismatch_is_rejected(default_tables):
    p, grid, traj, kernels, pair = default_tables
    other = build_kernel_table(SpectralDensity.from_params(p), p.occupation, TimeGrid(dt=0.01, n_steps=499))
    with pytest.raises(ValueError):
        precompute_integrals(pair, traj, other, [0])


def test_f1_on_the_diagonal(default_tables):
    _, _, traj, _, _ = default_tables
    G0 = traj.G[0]
    assert f1(0.0, 0.0, traj, 0.0) == pytest.approx(abs(G0) ** 2)
    K = traj.kappa_int[200]
    assert f1(2.0, 2.0, traj, 0.0) == pytest.approx(abs(traj.G[200]) ** 2 * np.exp(-K), rel=1e-12)


def test_kernels_vanish_without_coupling(constant_trajectory):
    traj = constant_trajectory(TimeGrid(dt=0.01, n_steps=100), 0j, 1.0, 0.05)
    assert f1(0.3, 0.7, traj, 2.0) == 0
    assert f2(0.3, 0.7, traj) == 0
    assert f_ini(0.5, traj, 10 + 0j, 3 + 0j) == 0


def test_f2_empty_range_at_origin(default_tables):
    _, _, traj, _, _ = default_tables
    assert f2(0.0, 1.5, traj) == 0
    assert f2(1.5, 0.0, traj) == 0


def test_f2_constant_coefficients(constant_trajectory):
    G, kappa, tau = 0.2 + 0.1j, 0.3, 2.5
    traj = constant_trajectory(TimeGrid(dt=0.01, n_steps=300), G, 1.0, kappa)
    expected = abs(G) ** 2 * (1.0 - np.exp(-kappa * tau))
    assert f2(tau, tau, traj) == pytest.approx(expected, rel=1e-12)


def test_f_ini_at_origin_and_linearity(default_tables):
    _, _, traj, _, _ = default_tables
    c1, c2 = 30 + 4j, 7 - 2j
    G0 = traj.G[0]
    assert f_ini(0.0, traj, c1, c2) == pytest.approx(np.conj(G0) * c1 + G0 * np.conj(c2))
    assert f_ini(1.3, traj, 2 * c1, 2 * c2) == pytest.approx(2 * f_ini(1.3, traj, c1, c2), rel=1e-14)
    assert f_ini(1.3, traj, 0j, 0j) == 0


def test_bose_bath_runs(free_params):
    p = PhysicalParams(occupation=Occupation(kind="bose", temperature=50.0), m0=None)
    grid = TimeGrid(dt=0.05, n_steps=20)
    traj, kernels, pair = run_tables(p, grid)
    series = assemble_Nb(pair, traj, p, kernels)
    assert series.Nb[0] == pytest.approx(1.0 / np.expm1(1.0 / 50.0))
    assert np.all(np.isfinite(series.Nb))


def test_phonon_columns(default_tables):
    p, grid, traj, kernels, pair = default_tables
    series = assemble_Nb(pair, traj, p, kernels, output_indices(grid, 1.0))
    columns = phonon_columns(series)
    assert list(columns)[:2] == ["t", "N_b"]
    assert "N_b_correlation" in columns
    assert columns["t"].tolist() == pytest.approx([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])


def test_photon_term_weights_both_cavity_channels(default_tables):
    p, grid, traj, kernels, pair = default_tables
    integrals = precompute_integrals(pair, traj, kernels, output_indices(grid, 1.0))
    vacuum = series_from_integrals(integrals, p).components["photon"]
    excited = series_from_integrals(integrals, p.model_copy(update={"n0": 2.0})).components["photon"]
    A2, B2 = np.abs(integrals.A) ** 2, np.abs(integrals.B) ** 2
    assert np.allclose(vacuum, B2, rtol=1e-14, atol=0)
    assert np.allclose(excited, 2.0 * A2 + 3.0 * B2, rtol=1e-14, atol=0)
