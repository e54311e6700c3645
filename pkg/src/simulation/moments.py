"""Phonon number N_b(t) of the mechanical fluctuation from M, L, A, B and the noise kernels.

With db(t) = M db(0) + L* db^+(0) + A da(0) + B da^+(0) + noise and the noise
response h(t - tau) = M(t - tau) - L*(t - tau),

    N_b(t) = (|M|^2 + |L|^2) m0 + |L|^2 + |A|^2 n0 + |B|^2 (n0 + 1)
           + int int h*(t - tau1) h(t - tau2) [f2 + f_th](tau1, tau2)
           + 2 Re[M* (A c1 + B c2*) + L (A c2 + B c1*)]

The initial cavity fluctuation enters through the exact coefficients A, B (the
drive G(t) is not stationary while the mean field relaxes). f2 reduces to a
nested single integral and f_th is stationary, so every output time costs
O(n log n) and only the last term depends on (c1, c2).
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.linalg import matmul_toeplitz

from src.domain.entities import PhysicalParams, TimeGrid
from src.simulation.bath import KernelTable
from src.simulation.meanfield import MeanFieldTrajectory
from src.simulation.model import initial_phonons
from src.simulation.propagator import PropagatorPair

COMPONENTS = ("initial", "photon", "input_noise", "thermal", "correlation")


@dataclass(frozen=True)
class PhononSeries:
    times: np.ndarray
    Nb: np.ndarray
    components: dict[str, np.ndarray] = field(default_factory=dict)
    imag_residue: np.ndarray | None = None


@dataclass(frozen=True)
class OutputIntegrals:
    """Propagator values and noise integrals at the output times; none depends on (c1, c2)."""

    indices: np.ndarray
    times: np.ndarray
    M: np.ndarray
    L: np.ndarray
    A: np.ndarray
    B: np.ndarray
    input_noise: np.ndarray
    thermal: np.ndarray
    thermal_imag: np.ndarray


def _optical_amplitude(traj: MeanFieldTrajectory) -> np.ndarray:
    return np.conj(traj.G) * np.exp(-traj.phase_accum)


def f1(tau1: float, tau2: float, traj: MeanFieldTrajectory, n0: float) -> complex:
    """Photon-sourced kernel <A0(tau1)^+ A0(tau2)>-type term of the initial cavity fluctuation."""
    a = _optical_amplitude(traj)
    a1, a2 = a[traj.grid.index_of(tau1)], a[traj.grid.index_of(tau2)]
    return a1 * np.conj(a2) * (n0 + 1.0) + np.conj(a1) * a2 * n0


def f2(tau1: float, tau2: float, traj: MeanFieldTrajectory) -> complex:
    """Vacuum input-noise kernel: a(tau1) a*(tau2) (e^{K(min(tau1, tau2))} - 1)."""
    a = _optical_amplitude(traj)
    j1, j2 = traj.grid.index_of(tau1), traj.grid.index_of(tau2)
    return a[j1] * np.conj(a[j2]) * np.expm1(traj.kappa_int[min(j1, j2)])


def f_ini(tau: float, traj: MeanFieldTrajectory, c1: complex, c2: complex) -> complex:
    j = traj.grid.index_of(tau)
    a = _optical_amplitude(traj)[j]
    return a * c1 + np.conj(a) * np.conj(c2)


def output_indices(grid: TimeGrid, every: float) -> np.ndarray:
    return np.arange(0, grid.n_steps + 1, grid.stride_for(every))


def _check_grids(pair: PropagatorPair, traj: MeanFieldTrajectory, kernels: KernelTable) -> None:
    if not (pair.grid == traj.grid == kernels.grid):
        raise ValueError("propagator, mean field and kernel tables must share one grid")


def _integrals_at(n: int, h: np.ndarray, a: np.ndarray, traj: MeanFieldTrajectory, kernels: KernelTable):
    dt = traj.grid.dt
    if n == 0:
        return 0.0, 0.0, 0.0

    w = np.full(n + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    hv = h[n::-1]

    phi = hv * np.conj(a[: n + 1])
    tail = cumulative_trapezoid(phi, dx=dt, initial=0.0)
    tail = tail[-1] - tail
    kappa_weight = traj.kappa[: n + 1] * np.exp(traj.kappa_int[: n + 1])
    input_noise = trapezoid(kappa_weight * np.abs(tail) ** 2, dx=dt)

    column = kernels.thermal[: n + 1]
    v = w * hv
    thermal = np.vdot(v, matmul_toeplitz((column, np.conj(column)), v))
    return float(input_noise), float(thermal.real), float(thermal.imag)


def precompute_integrals(
    pair: PropagatorPair,
    traj: MeanFieldTrajectory,
    kernels: KernelTable,
    indices,
) -> OutputIntegrals:
    _check_grids(pair, traj, kernels)
    indices = np.asarray(indices, dtype=int)
    if indices.size and (indices.min() < 0 or indices.max() > traj.grid.n_steps):
        raise IndexError("output indices outside the grid")

    h = pair.response
    a = _optical_amplitude(traj)
    rows = [_integrals_at(int(n), h, a, traj, kernels) for n in indices]
    noise, thermal, thermal_imag = zip(*rows) if rows else [()] * 3
    return OutputIntegrals(
        indices=indices,
        times=traj.grid.times[indices],
        M=pair.M[indices],
        L=pair.L[indices],
        A=pair.A[indices],
        B=pair.B[indices],
        input_noise=np.asarray(noise, dtype=float),
        thermal=np.asarray(thermal, dtype=float),
        thermal_imag=np.asarray(thermal_imag, dtype=float),
    )


def concat_integrals(parts: list[OutputIntegrals]) -> OutputIntegrals:
    """Join batches in the given order."""
    if not parts:
        raise ValueError("concat_integrals: no batches")
    return OutputIntegrals(
        **{name: np.concatenate([getattr(p, name) for p in parts]) for name in OutputIntegrals.__dataclass_fields__}
    )


def series_from_integrals(
    integrals: OutputIntegrals,
    p: PhysicalParams,
    c1: complex | None = None,
    c2: complex | None = None,
) -> PhononSeries:
    c1 = p.c1 if c1 is None else complex(c1)
    c2 = p.c2 if c2 is None else complex(c2)
    m0, n0 = initial_phonons(p), p.n0
    M, L, A, B = integrals.M, integrals.L, integrals.A, integrals.B

    abs_L2 = np.abs(L) ** 2
    components = {
        "initial": (np.abs(M) ** 2 + abs_L2) * m0 + abs_L2,
        "photon": n0 * np.abs(A) ** 2 + (n0 + 1.0) * np.abs(B) ** 2,
        "input_noise": integrals.input_noise,
        "thermal": integrals.thermal,
        "correlation": 2.0 * np.real(
            np.conj(M) * (A * c1 + B * np.conj(c2)) + L * (A * c2 + B * np.conj(c1))
        ),
    }
    Nb = sum(components[name] for name in COMPONENTS)
    return PhononSeries(
        times=integrals.times,
        Nb=Nb,
        components=components,
        imag_residue=integrals.thermal_imag,
    )


def assemble_Nb(
    pair: PropagatorPair,
    traj: MeanFieldTrajectory,
    p: PhysicalParams,
    kernels: KernelTable,
    indices=None,
) -> PhononSeries:
    if indices is None:
        indices = np.arange(traj.grid.n_steps + 1)
    return series_from_integrals(precompute_integrals(pair, traj, kernels, indices), p)


def phonon_columns(series: PhononSeries) -> dict[str, np.ndarray]:
    columns = {"t": series.times, "N_b": series.Nb}
    for name in COMPONENTS:
        if name in series.components:
            columns[f"N_b_{name}"] = series.components[name]
    return columns
