"""Physical parameters, dissipation schedules and Gaussian physicality diagnostics.

Units: omega_m = 1, hbar = k_B = 1; times in 1/omega_m.
"""
from dataclasses import dataclass, field

import numpy as np

from src.domain.entities import KappaSchedule, Occupation, PhysicalParams, TimeGrid


@dataclass(frozen=True)
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class PhysicalityReport:
    checks: dict[str, bool]
    min_eigenvalue: float

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def mean_occupation(occupation: Occupation, omega):
    """Bath occupation n(omega): flat m_k, or Bose-Einstein 1/(exp(omega/T) - 1)."""
    omega = np.asarray(omega, dtype=float)
    if occupation.kind == "flat":
        return np.full_like(omega, occupation.m_k)
    T = occupation.temperature or 0.0
    if T <= 0.0:
        return np.zeros_like(omega)
    with np.errstate(divide="ignore", over="ignore"):
        return 1.0 / np.expm1(omega / T)


def initial_phonons(p: PhysicalParams) -> float:
    """m0, or the bath occupation at omega_m when m0 is left unset."""
    if p.m0 is not None:
        return p.m0
    return float(mean_occupation(p.occupation, p.omega_m))


def expected_delta_eff(p: PhysicalParams) -> float:
    return p.delta_c if p.delta_c is not None else p.delta_eff_target


def validate_params(p: PhysicalParams, sched: KappaSchedule, grid: TimeGrid) -> ValidationReport:
    violations = []
    warnings = []
    if p.omega_m != 1.0:
        violations.append("omega_m = 1")
    if p.eta < 0:
        violations.append("eta ≥ 0")
    if p.omega_l <= 0:
        violations.append("omega_l > 0")
    if p.s_exponent <= 0:
        violations.append("s_exponent > 0")
    if p.m0 is not None and p.m0 < 0:
        violations.append("m0 ≥ 0")
    if p.n0 < 0:
        violations.append("n0 ≥ 0")
    if p.drive_E < 0:
        violations.append("drive_E ≥ 0")
    if p.occupation.kind == "flat" and p.occupation.m_k < 0:
        violations.append("m_k ≥ 0")
    if p.occupation.kind == "bose" and (p.occupation.temperature is None or p.occupation.temperature < 0):
        violations.append("temperature ≥ 0")

    starts = [s for s, _ in sched.segments]
    if not sched.segments:
        violations.append("schedule has at least one segment")
    else:
        if starts[0] != 0.0:
            violations.append("first segment starts at t = 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            violations.append("segment start times strictly increasing")
        if any(k < 0 for _, k in sched.segments):
            violations.append("kappa ≥ 0")

    if grid.dt <= 0:
        violations.append("dt > 0")
    if grid.n_steps < 1:
        violations.append("n_steps ≥ 1")

    if grid.dt > 0:
        if grid.dt * p.omega_l > 0.1:
            warnings.append(f"dt*omega_l = {grid.dt * p.omega_l:.3g} > 0.1: bath memory under-resolved")
        fastest = abs(expected_delta_eff(p))
        if grid.dt * fastest > 0.1:
            warnings.append(f"dt*|delta_eff| = {grid.dt * fastest:.3g} > 0.1: cavity rotation under-resolved")
    return ValidationReport(violations=violations, warnings=warnings)


def kappa_at(sched: KappaSchedule, t: float) -> float:
    if t < 0:
        raise ValueError(f"kappa_at: t must be >= 0, got {t}")
    starts = np.array([s for s, _ in sched.segments])
    idx = int(np.searchsorted(starts, t, side="right")) - 1
    return sched.segments[idx][1]


def kappa_series(sched: KappaSchedule, times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("kappa_series: times must be >= 0")
    starts = np.array([s for s, _ in sched.segments])
    values = np.array([k for _, k in sched.segments])
    return values[np.searchsorted(starts, times, side="right") - 1]


def kappa_integral(sched: KappaSchedule, times: np.ndarray) -> np.ndarray:
    """K(t) = int_0^t kappa, exact for the piecewise-constant schedule."""
    times = np.asarray(times, dtype=float)
    total = np.zeros_like(times)
    bounds = [s for s, _ in sched.segments[1:]] + [np.inf]
    for (start, kappa), end in zip(sched.segments, bounds):
        total = total + kappa * np.clip(times - start, 0.0, end - start)
    return total


def quadrature_covariance(normal: np.ndarray, anomalous: np.ndarray) -> np.ndarray:
    """Symmetrized covariance of (x_1..x_n, p_1..p_n) from C_ij = <a_i^+ a_j>, G_ij = <a_i a_j>.

    Vacuum variance is 1/2 (x = (a + a^+)/sqrt(2)).
    """
    n = normal.shape[0]
    eye = np.eye(n)
    v_xx = normal.real + anomalous.real + 0.5 * eye
    v_pp = normal.real - anomalous.real + 0.5 * eye
    v_xp = normal.imag + anomalous.imag
    return np.block([[v_xx, v_xp], [v_xp.T, v_pp]])


def symplectic_form(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def uncertainty_min_eigenvalue(normal: np.ndarray, anomalous: np.ndarray) -> float:
    """Smallest eigenvalue of V + (i/2) Omega; negative means no legal Gaussian state."""
    n = normal.shape[0]
    V = quadrature_covariance(normal, anomalous)
    return float(np.linalg.eigvalsh(V + 0.5j * symplectic_form(n)).min())


def two_mode_moments(n0: float, m0: float, c1: complex, c2: complex) -> tuple[np.ndarray, np.ndarray]:
    """(C, G) for modes (da, db) with <db^+ da> = c1, <db da> = c2 and no single-mode squeezing."""
    normal = np.array([[n0, np.conj(c1)], [c1, m0]], dtype=complex)
    anomalous = np.array([[0.0, c2], [c2, 0.0]], dtype=complex)
    return normal, anomalous


def gaussian_physicality(n0: float, m0: float, c1: complex, c2: complex) -> PhysicalityReport:
    if n0 < 0 or m0 < 0:
        raise ValueError("gaussian_physicality: n0 and m0 must be >= 0")
    scale = 1e-12 * (1.0 + n0 * m0 + n0 + m0)
    checks = {
        "c1_cauchy_schwarz": abs(c1) ** 2 <= n0 * m0 + scale,
        "c2_cauchy_schwarz": abs(c2) ** 2 <= min((n0 + 1) * m0, n0 * (m0 + 1)) + scale,
    }
    min_eig = uncertainty_min_eigenvalue(*two_mode_moments(n0, m0, c1, c2))
    checks["uncertainty"] = min_eig >= -1e-9 * (1.0 + n0 + m0)
    return PhysicalityReport(checks=checks, min_eigenvalue=min_eig)
