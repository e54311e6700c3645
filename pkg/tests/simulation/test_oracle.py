import numpy as np
import pytest

from src.domain.entities import KappaSchedule, PhysicalParams, TimeGrid
from src.simulation.bath import SpectralDensity, build_kernel_table
from src.simulation.meanfield import solve_meanfield
from src.simulation.moments import output_indices, precompute_integrals, series_from_integrals
from src.simulation.oracle import (
    clip_window,
    compare_columns,
    discretize_bath,
    evolve_moments,
    extract_correlations,
    extract_Nb,
    fundamental_solution,
    initial_moments,
    photon_number,
    relative_l2,
    required_modes,
)
from src.simulation.moments import PhononSeries
from src.simulation.propagator import solve_ML


class FlatDensity:
    def spectral_density(self, omega):
        return np.full_like(omega, 0.3)


@pytest.fixture
def decoupled(free_params):
    grid = TimeGrid(dt=0.01, n_steps=200)
    sched = KappaSchedule.constant(0.1)
    traj = solve_meanfield(free_params, sched, grid)
    bath = discretize_bath(SpectralDensity.from_params(free_params), 200.0, 4)
    return free_params, sched, bath, traj


@pytest.fixture(scope="module")
def bathless():
    """Default optomechanics without the reservoir: one uncoupled oracle mode, the kernel path on the same mean field."""
    p = PhysicalParams(eta=0.0)
    sched = KappaSchedule()
    grid = TimeGrid(dt=0.01, n_steps=1000)
    J = SpectralDensity.from_params(p)
    kernels = build_kernel_table(J, p.occupation, grid)
    traj = solve_meanfield(p, sched, grid, kernels.memory)
    pair = solve_ML(traj, kernels.memory)
    integrals = precompute_integrals(pair, traj, kernels, output_indices(grid, 0.25))
    return p, sched, traj, pair, integrals, discretize_bath(J, 200.0, 1)


def test_single_mode_midpoint():
    bath = discretize_bath(FlatDensity(), 2.0, 1)
    assert bath.omegas.tolist() == [1.0]
    assert bath.couplings[0] ** 2 == pytest.approx(0.6)


def test_discretization_rejects_degenerate_input():
    with pytest.raises(ValueError):
        discretize_bath(FlatDensity(), 0.0, 10)
    with pytest.raises(ValueError):
        discretize_bath(FlatDensity(), 2.0, 0)


def test_discretized_weight_matches_closed_form():
    J = SpectralDensity.from_params(PhysicalParams())
    bath = discretize_bath(J, 200.0, 600)
    assert np.sum(bath.couplings**2) == pytest.approx(2.5e-4, rel=1e-3)
    assert len(np.unique(bath.omegas)) == 600


def test_kernel_reconstruction_converges_with_modes():
    J = SpectralDensity.from_params(PhysicalParams())
    t = np.linspace(0.0, 70.0, 351)
    exact = J.memory_kernel(t)
    # K >= 5000 keeps the first revival 2 pi K / omega_max beyond twice the window
    errors = [relative_l2(discretize_bath(J, 200.0, K).memory_kernel(t), exact) for K in (5000, 10000, 20000)]
    assert errors[0] >= 2.0 * errors[1]
    assert errors[1] >= 2.0 * errors[2]
    assert errors[2] < 1e-3


def test_recurrence_guard_clips_the_window():
    bath = discretize_bath(SpectralDensity.from_params(PhysicalParams()), 200.0, 600)
    assert bath.recurrence_horizon == pytest.approx(np.pi * 3.0)
    assert clip_window(bath, 30.0) == pytest.approx(np.pi * 3.0)
    assert clip_window(bath, 5.0) == 5.0
    assert required_modes(200.0, 30.0) == 1910


def test_initial_moments(free_params, decoupled):
    _, _, bath, _ = decoupled
    state = initial_moments(free_params, bath)
    assert state.normal[1, 1] == 2.0
    assert state.normal[0, 0] == 1.0
    assert state.normal[1, 0] == 0.5
    assert state.anomalous[0, 1] == state.anomalous[1, 0] == 0.3
    assert np.allclose(np.diag(state.normal)[2:], 100.0)
    assert np.array_equal(state.normal, state.normal.conj().T)
    assert np.all(state.means == 0)


def test_decoupled_network_keeps_occupancies(decoupled):
    p, sched, bath, traj = decoupled
    series = evolve_moments(p, sched, bath, traj, every=0.25, positivity_samples=3)
    nb = extract_Nb(series)
    assert nb.Nb[0] == 2.0
    assert np.allclose(nb.Nb, 2.0, rtol=0, atol=1e-10)
    assert np.allclose(series.nu, 0.0, atol=1e-12)
    assert photon_number(series)[-1] == pytest.approx(np.exp(-0.1 * 2.0), rel=1e-8)


def test_decoupled_pair_correlation_closed_form(decoupled):
    p, sched, bath, traj = decoupled
    series = evolve_moments(p, sched, bath, traj, every=0.5, positivity_samples=0)
    t = series.times
    expected = 0.3 * np.exp(-(1j * (0.8 + 1.0) + 0.05) * t)
    assert np.allclose(extract_correlations(series, "ab"), expected, rtol=0, atol=1e-9)
    assert extract_correlations(series, "b_dag_a")[0] == 0.5
    assert extract_correlations(series, "a_dag_b")[0] == 0.5
    assert extract_correlations(series, "a_dag_b_k").shape == (t.size, 4)


def test_unknown_correlation(decoupled):
    p, sched, bath, traj = decoupled
    series = evolve_moments(p, sched, bath, traj, t_end=0.5, positivity_samples=0)
    with pytest.raises(ValueError):
        extract_correlations(series, "bb")


def test_fundamental_solution_of_free_oscillator(decoupled):
    p, sched, bath, traj = decoupled
    pair = fundamental_solution(p, sched, bath, traj)
    t = traj.grid.times
    assert np.allclose(pair.M, np.exp(-1j * t), rtol=0, atol=1e-8)
    assert np.allclose(pair.L, 0.0, atol=1e-12)


def test_coupled_network_stays_physical():
    p = PhysicalParams()
    grid = TimeGrid(dt=0.01, n_steps=200)
    sched = KappaSchedule()
    traj = solve_meanfield(p, sched, grid)
    bath = discretize_bath(SpectralDensity.from_params(p), 200.0, 20)
    series = evolve_moments(p, sched, bath, traj, every=0.5, positivity_samples=5)
    assert len(series.min_eigenvalues) == 5
    assert min(series.min_eigenvalues.values()) >= -1e-6
    assert np.all(np.isfinite(series.normal_rows))
    assert np.max(np.abs(extract_Nb(series).imag_residue)) < 1e-9


def test_compare_columns_and_l2():
    kernel = PhononSeries(times=np.array([0.0, 1.0, 2.0]), Nb=np.array([10.0, 8.0, 6.0]))
    oracle = PhononSeries(times=np.array([0.0, 2.0]), Nb=np.array([10.0, 5.0]))
    columns = compare_columns(kernel, oracle)
    assert columns["N_b_kernel"].tolist() == [10.0, 6.0]
    assert columns["abs_rel_diff"].tolist() == pytest.approx([0.0, 1.0 / 6.0])
    assert relative_l2(np.array([1.0, 1.0]), np.array([1.0, 1.0])) == 0.0


def test_cavity_coefficients_match_fundamental_solution(bathless):
    p, sched, traj, pair, _, bath = bathless
    exact = fundamental_solution(p, sched, bath, traj)
    for name in ("M", "L", "A", "B"):
        ours, theirs = getattr(pair, name), getattr(exact, name)
        scale = np.abs(theirs).max()
        assert np.abs(ours - theirs).max() <= 1e-3 * max(scale, 1.0), name


@pytest.mark.parametrize("c1, c2", [(100, 0), (0, 100)])
def test_correlation_shift_matches_moment_evolution(bathless, c1, c2):
    p, sched, traj, _, integrals, bath = bathless
    shift = (
        series_from_integrals(integrals, p, c1=c1, c2=c2).Nb
        - series_from_integrals(integrals, p, c1=0, c2=0).Nb
    )
    correlated = p.model_copy(update={"c1": complex(c1), "c2": complex(c2)})
    reference = extract_Nb(evolve_moments(correlated, sched, bath, traj, positivity_samples=0)).Nb
    baseline = extract_Nb(evolve_moments(p, sched, bath, traj, positivity_samples=0)).Nb
    expected = reference - baseline

    assert shift.shape == expected.shape
    assert np.abs(expected).max() > 1.0
    np.testing.assert_allclose(shift, expected, atol=5e-3 * (1.0 + np.abs(expected).max()))
