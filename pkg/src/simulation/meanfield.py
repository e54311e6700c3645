"""Classical mean field of the driven cavity and the non-Markovian mirror.

    d(alpha)/dt = -(i Delta_c + kappa(t)/2) alpha + i g0 alpha (beta + beta*) + E
    d(beta)/dt  = -i omega_m beta + i g0 |alpha|^2 + int_0^t f(t - tau) (beta + beta*)(tau) dtau

Both equations are integrated with an integrating-factor Heun scheme: the linear
rotation/decay is propagated exactly over each step and the remainder by the
trapezoidal predictor-corrector. f(0) = 0, so the memory integral at t_n only
needs the history up to t_{n-1} and stays explicit.
"""
import time
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import fixed_point

from src.domain.entities import KappaSchedule, PhysicalParams, TimeGrid
from src.exceptions import DivergenceException
from src.simulation.bath import SpectralDensity
from src.simulation.model import kappa_integral, kappa_series
from src.utils import get_logger


@dataclass(frozen=True)
class MeanFieldTrajectory:
    grid: TimeGrid
    delta_c: float
    omega_m: float
    alpha: np.ndarray
    beta: np.ndarray
    G: np.ndarray
    delta_eff: np.ndarray
    kappa: np.ndarray
    kappa_int: np.ndarray
    phase_accum: np.ndarray

    @property
    def u0(self) -> np.ndarray:
        """u(t_j, 0)."""
        return -self.phase_accum

    @property
    def u1(self) -> np.ndarray:
        return -self.phase_accum - 1j * self.omega_m * self.grid.times

    @property
    def u2(self) -> np.ndarray:
        return -np.conj(self.phase_accum) - 1j * self.omega_m * self.grid.times


def phase_u(traj: MeanFieldTrajectory, t1: float, t2: float) -> complex:
    """u(t1, t2) = -int_{t2}^{t1} [i Delta_c'(tau) + kappa(tau)/2] dtau."""
    j1, j2 = traj.grid.index_of(t1), traj.grid.index_of(t2)
    return -(traj.phase_accum[j1] - traj.phase_accum[j2])


def phase_u1(traj: MeanFieldTrajectory, t: float) -> complex:
    return traj.u1[traj.grid.index_of(t)]


def phase_u2(traj: MeanFieldTrajectory, t: float) -> complex:
    return traj.u2[traj.grid.index_of(t)]


def steady_state(
    p: PhysicalParams, kappa: float, delta_c: float | None = None
) -> tuple[complex, complex]:
    """(alpha_ss, beta_ss) by damped fixed-point iteration.

    With `delta_c` None the effective detuning is pinned to `p.delta_eff_target`,
    otherwise it follows beta through Delta_c' = Delta_c - g0 (beta + beta*).
    """
    shift = SpectralDensity.from_params(p).static_shift

    def update(v):
        alpha, beta = complex(v[0], v[1]), complex(v[2], v[3])
        if delta_c is None:
            detuning = p.delta_eff_target
        else:
            detuning = delta_c - 2.0 * p.g0 * beta.real
        new_alpha = p.drive_E / (1j * detuning + 0.5 * kappa)
        new_beta = (p.g0 * abs(new_alpha) ** 2 + 4.0 * shift * beta.real) / p.omega_m
        damped_alpha = 0.5 * (alpha + new_alpha)
        damped_beta = 0.5 * (beta + new_beta)
        return np.array([damped_alpha.real, damped_alpha.imag, damped_beta.real, damped_beta.imag])

    try:
        v = fixed_point(update, np.zeros(4), xtol=1e-12, maxiter=5000)
    except RuntimeError as e:
        raise DivergenceException("steady_state", 5000, f"steady_state: fixed point not reached ({e})") from e
    return complex(v[0], v[1]), complex(v[2], v[3])


def resolve_detuning(p: PhysicalParams, sched: KappaSchedule) -> float:
    """Bare detuning: explicit `delta_c`, or the one that puts Delta_c' at its target in steady state."""
    if p.delta_c is not None:
        return p.delta_c
    _, beta_ss = steady_state(p, sched.base)
    return p.delta_eff_target + 2.0 * p.g0 * beta_ss.real


def solve_meanfield(
    p: PhysicalParams,
    sched: KappaSchedule,
    grid: TimeGrid,
    memory: np.ndarray | None = None,
) -> MeanFieldTrajectory:
    logger = get_logger()
    started = time.perf_counter()

    dt, n_steps = grid.dt, grid.n_steps
    times = grid.times
    if memory is None:
        memory = SpectralDensity.from_params(p).memory_kernel(times)
    f_im = memory.imag

    delta_c = resolve_detuning(p, sched)
    kappa = kappa_series(sched, times)
    K = kappa_integral(sched, times)

    rot_alpha = np.exp(-1j * delta_c * dt - 0.5 * np.diff(K))
    rot_beta = np.exp(-1j * p.omega_m * dt)
    g0, E = p.g0, p.drive_E

    alpha = np.empty(n_steps + 1, dtype=complex)
    beta = np.empty(n_steps + 1, dtype=complex)
    x = np.empty(n_steps + 1)
    alpha[0], beta[0] = p.alpha0, p.beta0
    x[0] = 2.0 * beta[0].real

    memory_now = 0j
    for n in range(n_steps):
        a_n, b_n = alpha[n], beta[n]
        ra_n = 1j * g0 * a_n * x[n] + E
        rb_n = 1j * g0 * abs(a_n) ** 2 + memory_now

        memory_next = 1j * dt * (0.5 * f_im[n + 1] * x[0] + np.dot(f_im[n:0:-1], x[1:n + 1]))

        a_pred = rot_alpha[n] * (a_n + dt * ra_n)
        b_pred = rot_beta * (b_n + dt * rb_n)
        ra_pred = 1j * g0 * a_pred * (2.0 * b_pred.real) + E
        rb_pred = 1j * g0 * abs(a_pred) ** 2 + memory_next

        a_next = rot_alpha[n] * (a_n + 0.5 * dt * ra_n) + 0.5 * dt * ra_pred
        b_next = rot_beta * (b_n + 0.5 * dt * rb_n) + 0.5 * dt * rb_pred
        if not (np.isfinite(a_next) and np.isfinite(b_next)):
            raise DivergenceException("meanfield", n + 1)
        alpha[n + 1], beta[n + 1] = a_next, b_next
        x[n + 1] = 2.0 * b_next.real
        memory_now = memory_next

    delta_eff = delta_c - g0 * x
    phase_accum = 1j * cumulative_trapezoid(delta_eff, dx=dt, initial=0.0) + 0.5 * K
    logger.info(
        f"Mean field solved on {n_steps + 1} points (delta_c={delta_c:.6g}) "
        f"in {time.perf_counter() - started:.2f}s"
    )
    return MeanFieldTrajectory(
        grid=grid,
        delta_c=delta_c,
        omega_m=p.omega_m,
        alpha=alpha,
        beta=beta,
        G=g0 * alpha,
        delta_eff=delta_eff,
        kappa=kappa,
        kappa_int=K,
        phase_accum=phase_accum,
    )


def meanfield_columns(traj: MeanFieldTrajectory, stride: int = 1) -> dict[str, np.ndarray]:
    sl = slice(None, None, stride)
    return {
        "t": traj.grid.times[sl],
        "re_alpha": traj.alpha.real[sl],
        "im_alpha": traj.alpha.imag[sl],
        "re_beta": traj.beta.real[sl],
        "im_beta": traj.beta.imag[sl],
        "abs_G": np.abs(traj.G)[sl],
        "delta_eff": traj.delta_eff[sl],
    }
