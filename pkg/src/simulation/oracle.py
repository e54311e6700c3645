"""Finite-bath validator: the reservoir cut into K explicit modes and the exact
second moments of the linear (2 + K)-mode network evolved by fixed-step RK4.

Modes are ordered c = (da, db, b_1 .. b_K). The fluctuation dynamics are
dc/dt = A(t) c + B(t) c^+ (+ vacuum input noise), and the moments are
N_ij = <c_i^+ c_j>, Q_ij = <c_i c_j>:

    dN/dt = R + R^H,        R = A* N + B* Q
    dQ/dt = S + S^T + B,    S = A Q + B N

Vacuum input adds nothing to normal-ordered moments. Only A and B rows 0, 1 and
column 1 are off-diagonal, so products are taken in arrow form.
"""
import math
import time
from dataclasses import dataclass

import numpy as np

from src.domain.entities import KappaSchedule, PhysicalParams, TimeGrid
from src.exceptions import DivergenceException
from src.simulation.bath import SpectralDensity
from src.simulation.meanfield import MeanFieldTrajectory
from src.simulation.model import kappa_at, mean_occupation, initial_phonons, uncertainty_min_eigenvalue
from src.simulation.moments import PhononSeries
from src.simulation.propagator import PropagatorPair
from src.utils import get_logger

CORRELATIONS = ("a_dag_a", "b_dag_b", "b_dag_a", "a_dag_b", "ab", "a_dag_b_k")


@dataclass(frozen=True)
class DiscretizedBath:
    K: int
    omegas: np.ndarray
    couplings: np.ndarray

    @property
    def spacing(self) -> float:
        return 2.0 * float(self.omegas[0])

    @property
    def recurrence_horizon(self) -> float:
        """Half the revival time 2 pi / d(omega)."""
        return math.pi / self.spacing

    def memory_kernel(self, t) -> np.ndarray:
        """2i sum_j V_j^2 sin(omega_j t)."""
        t = np.asarray(t, dtype=float)
        return 2j * np.sin(np.multiply.outer(t, self.omegas)) @ self.couplings**2


@dataclass(frozen=True)
class MomentState:
    normal: np.ndarray
    anomalous: np.ndarray

    @property
    def means(self) -> np.ndarray:
        return np.zeros(self.normal.shape[0], dtype=complex)


@dataclass(frozen=True)
class MomentSeries:
    """System rows (da, db) of N and Q at the output times, plus the exact dN_b/dt and N_a."""

    times: np.ndarray
    normal_rows: np.ndarray
    anomalous_rows: np.ndarray
    nu: np.ndarray
    min_eigenvalues: dict[float, float]


@dataclass(frozen=True)
class _Arrow:
    """Matrix with a diagonal, dense rows 0 and 1, and column 1."""

    diag: np.ndarray
    head: np.ndarray
    col: np.ndarray

    def conj(self) -> "_Arrow":
        return _Arrow(np.conj(self.diag), np.conj(self.head), np.conj(self.col))

    def left(self, x: np.ndarray) -> np.ndarray:
        y = (self.diag[:, None] if x.ndim == 2 else self.diag) * x
        y[:2] += self.head @ x
        y[2:] += np.multiply.outer(self.col, x[1])
        return y

    def add_to(self, x: np.ndarray) -> np.ndarray:
        x[np.diag_indices_from(x)] += self.diag
        x[:2] += self.head
        x[2:, 1] += self.col
        return x


def discretize_bath(J: SpectralDensity, omega_max: float, K: int) -> DiscretizedBath:
    if omega_max <= 0 or K < 1:
        raise ValueError("discretize_bath: need omega_max > 0 and K >= 1")
    d_omega = omega_max / K
    omegas = (np.arange(1, K + 1) - 0.5) * d_omega
    return DiscretizedBath(K=K, omegas=omegas, couplings=np.sqrt(J.spectral_density(omegas) * d_omega))


def required_modes(omega_max: float, t_window: float) -> int:
    """Smallest K whose recurrence horizon covers `t_window`."""
    return int(math.ceil(omega_max * t_window / math.pi))


def clip_window(bath: DiscretizedBath, t_window: float) -> float:
    logger = get_logger()
    horizon = bath.recurrence_horizon
    if t_window <= horizon:
        return t_window
    logger.warning(
        f"Oracle window {t_window:g} exceeds the bath recurrence horizon {horizon:.4g}; "
        f"comparing on [0, {horizon:.4g}] (K >= {required_modes(bath.omegas[-1] + 0.5 * bath.spacing, t_window)} "
        f"would cover the full window)"
    )
    return horizon


def initial_moments(p: PhysicalParams, bath: DiscretizedBath) -> MomentState:
    D = bath.K + 2
    normal = np.zeros((D, D), dtype=complex)
    anomalous = np.zeros((D, D), dtype=complex)
    normal[0, 0] = p.n0
    normal[1, 1] = initial_phonons(p)
    normal[1, 0] = p.c1
    normal[0, 1] = np.conj(p.c1)
    normal[2:, 2:][np.diag_indices(bath.K)] = mean_occupation(p.occupation, bath.omegas)
    anomalous[0, 1] = anomalous[1, 0] = p.c2
    return MomentState(normal=normal, anomalous=anomalous)


def _generator(G: complex, delta_eff: float, kappa: float, omega_m: float, bath: DiscretizedBath):
    D = bath.K + 2
    V = bath.couplings
    diag = np.concatenate(([-(1j * delta_eff + 0.5 * kappa), -1j * omega_m], -1j * bath.omegas))
    a_head = np.zeros((2, D), dtype=complex)
    a_head[0, 1] = 1j * G
    a_head[1, 0] = 1j * np.conj(G)
    a_head[1, 2:] = -1j * V
    b_head = np.zeros((2, D), dtype=complex)
    b_head[0, 1] = b_head[1, 0] = 1j * G
    b_head[1, 2:] = -1j * V
    col = -1j * V.astype(complex)
    return _Arrow(diag, a_head, col), _Arrow(np.zeros(D, dtype=complex), b_head, col)


class _Drive:
    """G(t), Delta_c'(t) by linear interpolation of the mean field, kappa(t) from the schedule."""

    def __init__(self, traj: MeanFieldTrajectory, sched: KappaSchedule, omega_m: float, bath: DiscretizedBath):
        self.times = traj.grid.times
        self.G = traj.G
        self.delta_eff = traj.delta_eff
        self.sched = sched
        self.omega_m = omega_m
        self.bath = bath

    def __call__(self, t: float):
        G = np.interp(t, self.times, self.G.real) + 1j * np.interp(t, self.times, self.G.imag)
        delta_eff = float(np.interp(t, self.times, self.delta_eff))
        return _generator(G, delta_eff, kappa_at(self.sched, t), self.omega_m, self.bath)


def _moment_rhs(drive: _Drive, t: float, y: np.ndarray) -> np.ndarray:
    A, B = drive(t)
    N, Q = y
    R = A.conj().left(N) + B.conj().left(Q)
    S = A.left(Q) + B.left(N)
    return np.stack([R + R.conj().T, B.add_to(S + S.T)])


def _vector_rhs(drive: _Drive, t: float, y: np.ndarray) -> np.ndarray:
    A, B = drive(t)
    u, w = y
    return np.stack([A.left(u) + B.left(np.conj(w)), A.left(w) + B.left(np.conj(u))])


def _rk4_step(fun, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = fun(t, y)
    k2 = fun(t + h / 2, y + 0.5 * h * k1)
    k3 = fun(t + h / 2, y + 0.5 * h * k2)
    k4 = fun(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _substeps(dt: float, bath: DiscretizedBath) -> int:
    """RK4 substeps per grid step so that h * omega_max <= 1."""
    fastest = bath.omegas[-1] + 0.5 * bath.spacing
    return max(1, int(math.ceil(dt * fastest)))


def _end_index(traj: MeanFieldTrajectory, t_end: float | None) -> int:
    if t_end is None:
        return traj.grid.n_steps
    return min(traj.grid.n_steps, int(math.floor(t_end / traj.grid.dt + 1e-9)))


def evolve_moments(
    p: PhysicalParams,
    sched: KappaSchedule,
    bath: DiscretizedBath,
    traj: MeanFieldTrajectory,
    t_end: float | None = None,
    every: float = 0.25,
    positivity_samples: int = 10,
) -> MomentSeries:
    logger = get_logger()
    started = time.perf_counter()

    grid = traj.grid
    n_end = _end_index(traj, t_end)
    stride = grid.stride_for(every)
    r = _substeps(grid.dt, bath)
    h = grid.dt / r
    drive = _Drive(traj, sched, p.omega_m, bath)
    rhs = lambda t, y: _moment_rhs(drive, t, y)  # noqa: E731
    sample_at = set(np.unique(np.linspace(0, n_end, max(positivity_samples, 0)).round().astype(int)).tolist())
    logger.info(f"Oracle: {bath.K} bath modes, {n_end} grid steps x {r} RK4 substeps")

    state = initial_moments(p, bath)
    y = np.stack([state.normal, state.anomalous])
    times, normal_rows, anomalous_rows, nu = [], [], [], []
    min_eigs = {}
    for n in range(n_end + 1):
        if n % stride == 0 or n in sample_at:
            if not np.all(np.isfinite(y[:, :2])):
                raise DivergenceException("oracle", n)
            t = grid.dt * n
            if n % stride == 0:
                A, B = drive(t)
                R = A.conj().left(y[0]) + B.conj().left(y[1])
                times.append(t)
                normal_rows.append(y[0, :2].copy())
                anomalous_rows.append(y[1, :2].copy())
                nu.append(2.0 * R[1, 1].real)
            if n in sample_at:
                min_eigs[t] = uncertainty_min_eigenvalue(y[0], y[1])
        if n == n_end:
            break
        for k in range(r):
            y = _rk4_step(rhs, grid.dt * n + k * h, y, h)

    worst = min(min_eigs.values()) if min_eigs else 0.0
    if worst < -1e-8:
        logger.warning(f"Oracle covariance left the physical cone: min eigenvalue {worst:.3g}")
    logger.info(f"Oracle evolved to t={grid.dt * n_end:g} in {time.perf_counter() - started:.2f}s")
    return MomentSeries(
        times=np.array(times),
        normal_rows=np.array(normal_rows),
        anomalous_rows=np.array(anomalous_rows),
        nu=np.array(nu),
        min_eigenvalues=min_eigs,
    )


def fundamental_solution(
    p: PhysicalParams,
    sched: KappaSchedule,
    bath: DiscretizedBath,
    traj: MeanFieldTrajectory,
    t_end: float | None = None,
) -> PropagatorPair:
    """Coefficients of db(0), db^+(0), da(0) and da^+(0) in db(t).

    With c(t) = U c(0) + W c^+(0): M = U_11, L = (W_11)*, A = U_10, B = W_10.
    """
    grid = traj.grid
    n_end = _end_index(traj, t_end)
    r = _substeps(grid.dt, bath)
    h = grid.dt / r
    drive = _Drive(traj, sched, p.omega_m, bath)
    rhs = lambda t, y: _vector_rhs(drive, t, y)  # noqa: E731

    # columns of U and W seeded by db(0) and da(0)
    y = np.zeros((2, bath.K + 2, 2), dtype=complex)
    y[0, 1, 0] = 1.0
    y[0, 0, 1] = 1.0
    U = np.empty((n_end + 1, 2), dtype=complex)
    W = np.empty((n_end + 1, 2), dtype=complex)
    for n in range(n_end + 1):
        U[n], W[n] = y[0, 1], y[1, 1]
        if not (np.all(np.isfinite(U[n])) and np.all(np.isfinite(W[n]))):
            raise DivergenceException("oracle", n)
        if n == n_end:
            break
        for k in range(r):
            y = _rk4_step(rhs, grid.dt * n + k * h, y, h)
    return PropagatorPair(
        grid=TimeGrid(dt=grid.dt, n_steps=n_end),
        M=U[:, 0].copy(),
        L=np.conj(W[:, 0]),
        A=U[:, 1].copy(),
        B=W[:, 1].copy(),
    )


def extract_Nb(series: MomentSeries) -> PhononSeries:
    occupation = series.normal_rows[:, 1, 1]
    return PhononSeries(times=series.times, Nb=occupation.real, imag_residue=occupation.imag)


def photon_number(series: MomentSeries) -> np.ndarray:
    return series.normal_rows[:, 0, 0].real


def extract_correlations(series: MomentSeries, which: str) -> np.ndarray:
    """<c_i^+ c_j> / <c_i c_j> columns among da, db (and the bath modes for `a_dag_b_k`)."""
    N, Q = series.normal_rows, series.anomalous_rows
    if which not in CORRELATIONS:
        raise ValueError(f"unknown correlation {which!r}, expected one of {CORRELATIONS}")
    if which in ("b_dag_a", "a_dag_b"):
        residue = np.max(np.abs(N[:, 1, 0] - np.conj(N[:, 0, 1])), initial=0.0)
        if residue > 1e-8 * (1.0 + np.max(np.abs(N[:, 1, 0]), initial=0.0)):
            get_logger().warning(f"Oracle moments lost Hermiticity: residue {residue:.3g}")
    return {
        "a_dag_a": lambda: N[:, 0, 0],
        "b_dag_b": lambda: N[:, 1, 1],
        "b_dag_a": lambda: N[:, 1, 0],
        "a_dag_b": lambda: N[:, 0, 1],
        "ab": lambda: Q[:, 0, 1],
        "a_dag_b_k": lambda: N[:, 0, 2:],
    }[which]()


def compare_columns(kernel: PhononSeries, oracle: PhononSeries) -> dict[str, np.ndarray]:
    """Kernel path against the oracle at the oracle output times."""
    nb_kernel = np.interp(oracle.times, kernel.times, kernel.Nb)
    return {
        "t": oracle.times,
        "N_b_kernel": nb_kernel,
        "N_b_oracle": oracle.Nb,
        "abs_rel_diff": np.abs(nb_kernel - oracle.Nb) / (1.0 + np.abs(oracle.Nb)),
    }


def relative_l2(values: np.ndarray, reference: np.ndarray) -> float:
    scale = np.linalg.norm(reference)
    return float(np.linalg.norm(values - reference) / (scale if scale > 0 else 1.0))
