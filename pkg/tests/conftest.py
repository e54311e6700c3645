import numpy as np
import pytest

from src.domain.entities import KappaSchedule, PhysicalParams, TimeGrid
from src.simulation.meanfield import MeanFieldTrajectory


@pytest.fixture
def small_grid():
    return TimeGrid(dt=0.01, n_steps=400)


@pytest.fixture
def free_params():
    """No optomechanical coupling, no drive, no bath."""
    return PhysicalParams(g0=0.0, drive_E=0.0, eta=0.0, delta_c=0.8, m0=2.0, n0=1.0, c1=0.5, c2=0.3)


@pytest.fixture
def default_schedule():
    return KappaSchedule()


@pytest.fixture
def constant_trajectory():
    """Trajectory with constant G, Delta_c' and kappa, built without solving anything."""

    def build(grid: TimeGrid, G: complex, delta_eff: float, kappa: float) -> MeanFieldTrajectory:
        t = grid.times
        n = t.size
        return MeanFieldTrajectory(
            grid=grid,
            delta_c=delta_eff,
            omega_m=1.0,
            alpha=np.full(n, G, dtype=complex),
            beta=np.zeros(n, dtype=complex),
            G=np.full(n, G, dtype=complex),
            delta_eff=np.full(n, delta_eff),
            kappa=np.full(n, kappa),
            kappa_int=kappa * t,
            phase_accum=(1j * delta_eff + 0.5 * kappa) * t,
        )

    return build
