"""Radiation-pressure dressed memory kernel and the M(t), L(t) propagator pair.

    dM/dt = -i omega_m M + int_0^t F(t, tau)  [M + L](tau) dtau,   M(0) = 1
    dL/dt = +i omega_m L + int_0^t F*(t, tau) [M + L](tau) dtau,   L(0) = 0

with F(t, tau) = f(t - tau) - [G*(t) G(tau) e^{u(t,tau)} - G(t) G*(tau) e^{u*(t,tau)}].
F(t, t) = 0, so the trapezoidal memory integral at t_{n+1} only involves the
history up to t_n; the rotation is propagated exactly and the memory term by the
trapezoidal rule. The optical part of F factorizes through e^{P(tau) - P(t)} and
is accumulated by a decaying running sum, so F is never materialized.

The same operator, started from zero and driven by s(t) = i G*(t) e^{u(t,0)}
(+s in the first equation, -s in the second), gives the coefficients of da(0)
in db(t) and db^+(t). It is solved as a second column of the same loop:

    db(t) = M db(0) + L* db^+(0) + A da(0) + B da^+(0) + noise
"""
import time
from dataclasses import dataclass

import numpy as np

from src.domain.entities import TimeGrid
from src.exceptions import DivergenceException
from src.simulation.meanfield import MeanFieldTrajectory
from src.utils import get_logger


@dataclass(frozen=True)
class PropagatorPair:
    grid: TimeGrid
    M: np.ndarray
    L: np.ndarray
    A: np.ndarray
    B: np.ndarray

    @property
    def response(self) -> np.ndarray:
        """h(k dt) = M(k dt) - L*(k dt): stationary response of db to the (anti-Hermitian) noise."""
        return self.M - np.conj(self.L)


def F_row(traj: MeanFieldTrajectory, memory: np.ndarray, n: int) -> np.ndarray:
    """F(t_n, t_j) for j = 0..n."""
    P, G = traj.phase_accum, traj.G
    j = np.arange(n + 1)
    e_u = np.exp(P[: n + 1] - P[n])
    optical = np.conj(G[n]) * G[: n + 1] * e_u - G[n] * np.conj(G[: n + 1]) * np.conj(e_u)
    return memory[n - j] - optical


def F_kernel(traj: MeanFieldTrajectory, memory: np.ndarray, t: float, tau: float) -> complex:
    if tau > t:
        raise ValueError(f"F_kernel: tau={tau} > t={t}")
    n, j = traj.grid.index_of(t), traj.grid.index_of(tau)
    return F_row(traj, memory, n)[j]


def cavity_source(traj: MeanFieldTrajectory) -> np.ndarray:
    """s(t) = i G*(t) e^{u(t, 0)}: how da(0) drives db."""
    return 1j * np.conj(traj.G) * np.exp(traj.u0)


def solve_ML(traj: MeanFieldTrajectory, memory: np.ndarray, omega_m: float = 1.0) -> PropagatorPair:
    logger = get_logger()
    started = time.perf_counter()

    grid = traj.grid
    dt, n_steps = grid.dt, grid.n_steps
    if memory.shape[0] != n_steps + 1:
        raise ValueError("solve_ML: memory table and trajectory grids differ")
    f_im = memory.imag
    G, P = traj.G, traj.phase_accum
    G_conj = np.conj(G)
    decay = np.exp(P[:-1] - P[1:])
    rot_M = np.exp(-1j * omega_m * dt)
    rot_L = np.exp(1j * omega_m * dt)

    # column 0 is seeded by db(0), column 1 by da(0)
    source = np.zeros((n_steps + 1, 2), dtype=complex)
    source[:, 1] = cavity_source(traj)
    X = np.empty((n_steps + 1, 2), dtype=complex)  # (M, A)
    Y = np.empty((n_steps + 1, 2), dtype=complex)  # (L, B*)
    zr = np.empty((n_steps + 1, 2))
    zi = np.empty((n_steps + 1, 2))
    X[0], Y[0] = (1.0, 0.0), (0.0, 0.0)
    zr[0], zi[0] = (1.0, 0.0), (0.0, 0.0)

    run_a = np.zeros(2, dtype=complex)  # dt * sum_{j<n} w_j G_j z_j e^{P_j - P_n}
    run_b = np.zeros(2, dtype=complex)  # dt * sum_{j<n} w_j G*_j z_j e^{(P_j - P_n)*}
    mem_X, mem_Y = source[0].copy(), -source[0]
    for n in range(n_steps):
        w = 0.5 if n == 0 else 1.0
        z_n = zr[n] + 1j * zi[n]
        run_a = decay[n] * (run_a + dt * w * G[n] * z_n)
        run_b = np.conj(decay[n]) * (run_b + dt * w * G_conj[n] * z_n)

        head = 0.5 * f_im[n + 1]
        tail = f_im[n:0:-1]
        bath = 1j * dt * (
            head * zr[0] + tail @ zr[1:n + 1]
            + 1j * (head * zi[0] + tail @ zi[1:n + 1])
        )
        optical = G_conj[n + 1] * run_a - G[n + 1] * run_b
        next_mem_X = bath - optical + source[n + 1]
        next_mem_Y = -bath + optical - source[n + 1]

        x_next = rot_M * (X[n] + 0.5 * dt * mem_X) + 0.5 * dt * next_mem_X
        y_next = rot_L * (Y[n] + 0.5 * dt * mem_Y) + 0.5 * dt * next_mem_Y
        if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(y_next))):
            raise DivergenceException("propagator", n + 1)
        X[n + 1], Y[n + 1] = x_next, y_next
        z_next = x_next + y_next
        zr[n + 1], zi[n + 1] = z_next.real, z_next.imag
        mem_X, mem_Y = next_mem_X, next_mem_Y

    logger.info(f"M/L propagator solved on {n_steps + 1} points in {time.perf_counter() - started:.2f}s")
    return PropagatorPair(grid=grid, M=X[:, 0].copy(), L=Y[:, 0].copy(), A=X[:, 1].copy(), B=np.conj(Y[:, 1]))
