"""Spectral density of the mechanical reservoir and the two kernels derived from it."""
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma

from src.domain.entities import Occupation, PhysicalParams, TimeGrid
from src.simulation.model import mean_occupation
from src.utils import get_logger


@dataclass(frozen=True)
class SpectralDensity:
    """J(w) = eta * w * (w / w_l)**(s - 1) * exp(-w / w_l).

    0 < s < 1 is sub-Ohmic, s = 1 Ohmic, s > 1 super-Ohmic.
    """

    eta: float
    omega_l: float
    s_exponent: float

    @classmethod
    def from_params(cls, p: PhysicalParams) -> "SpectralDensity":
        return cls(eta=p.eta, omega_l=p.omega_l, s_exponent=p.s_exponent)

    @property
    def omega_max(self) -> float:
        """Quadrature cut: exp(-w/w_l) is below 1e-17 beyond it."""
        return self.omega_l * (40.0 + 10.0 * self.s_exponent)

    @property
    def total_weight(self) -> float:
        """int_0^inf J(w) dw."""
        return self.eta * self.omega_l**2 * gamma(self.s_exponent + 1.0)

    @property
    def static_shift(self) -> float:
        """int_0^inf J(w)/w dw; the zero-frequency response of the memory kernel is 2i times this."""
        return self.eta * self.omega_l * gamma(self.s_exponent)

    def spectral_density(self, omega):
        omega = np.asarray(omega, dtype=float)
        if np.any(omega < 0):
            raise ValueError("spectral_density: omega must be >= 0")
        s, wl = self.s_exponent, self.omega_l
        with np.errstate(divide="ignore", invalid="ignore"):
            j = self.eta * omega * np.power(omega / wl, s - 1.0) * np.exp(-omega / wl)
        return np.where(omega > 0, j, 0.0)

    def _gamma_transform(self, t):
        """(magnitude, phase) of int_0^inf J(w) exp(iwt) dw."""
        s1 = self.s_exponent + 1.0
        x = self.omega_l * t
        magnitude = self.total_weight / np.power(1.0 + x * x, 0.5 * s1)
        return magnitude, s1 * np.arctan(x)

    def memory_kernel(self, t):
        """f(t) = 2i int J(w) sin(wt) dw, closed form; purely imaginary."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("memory_kernel: t must be >= 0")
        magnitude, phase = self._gamma_transform(t)
        return 1j * (2.0 * magnitude * np.sin(phase))

    def memory_kernel_quad(self, t: float) -> complex:
        """Adaptive-quadrature reference for `memory_kernel`."""
        if t < 0:
            raise ValueError("memory_kernel_quad: t must be >= 0")
        if t == 0:
            return 0j
        value, _ = quad(
            self.spectral_density, 0.0, self.omega_max,
            weight="sin", wvar=t, epsabs=0.0, epsrel=1e-12, limit=500,
        )
        return 2j * value

    def _thermal_weight(self, omega: float, occupation: Occupation) -> float:
        if omega <= 0:
            if occupation.kind == "bose" and self.s_exponent == 1.0 and (occupation.temperature or 0) > 0:
                return 2.0 * occupation.temperature * self.eta
            return 0.0
        return float(self.spectral_density(omega) * (1.0 + 2.0 * mean_occupation(occupation, omega)))

    def thermal_kernel(self, tau1: float, tau2: float, occupation: Occupation) -> complex:
        """f_th = int J(w) {exp(-iw(t1 - t2)) + 2 cos(w(t1 - t2)) n(w)} dw, by quadrature."""
        if tau1 < 0 or tau2 < 0:
            raise ValueError("thermal_kernel: times must be >= 0")
        delta = tau1 - tau2
        lag = abs(delta)
        weight = lambda w: self._thermal_weight(w, occupation)  # noqa: E731
        if lag == 0:
            even, _ = quad(weight, 0.0, self.omega_max, epsabs=0.0, epsrel=1e-11, limit=500)
            return complex(even, 0.0)
        even, _ = quad(weight, 0.0, self.omega_max, weight="cos", wvar=lag, epsabs=0.0, epsrel=1e-11, limit=500)
        odd, _ = quad(
            self.spectral_density, 0.0, self.omega_max,
            weight="sin", wvar=lag, epsabs=0.0, epsrel=1e-11, limit=500,
        )
        value = complex(even, -odd)
        return value if delta >= 0 else value.conjugate()

    def thermal_kernel_flat(self, lag, m_k: float):
        """Closed form of `thermal_kernel` for flat occupation, lag = t1 - t2 >= 0."""
        lag = np.asarray(lag, dtype=float)
        magnitude, phase = self._gamma_transform(lag)
        return magnitude * ((1.0 + 2.0 * m_k) * np.cos(phase) - 1j * np.sin(phase))


@dataclass(frozen=True)
class KernelTable:
    """f(t_j) and f_th(t_j) on the grid; f_th at negative lags is the conjugate."""

    grid: TimeGrid
    memory: np.ndarray
    thermal: np.ndarray


def build_kernel_table(J: SpectralDensity, occupation: Occupation, grid: TimeGrid) -> KernelTable:
    logger = get_logger()
    lags = grid.times
    memory = J.memory_kernel(lags)
    if occupation.kind == "flat":
        thermal = J.thermal_kernel_flat(lags, occupation.m_k)
    else:
        logger.info(f"Tabulating Bose-Einstein thermal kernel by quadrature on {lags.size} lags")
        thermal = np.array([J.thermal_kernel(lag, 0.0, occupation) for lag in lags])
    return KernelTable(grid=grid, memory=memory, thermal=thermal)
