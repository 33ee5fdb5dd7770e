"""1D periodic-grid wavefunctions and Strang split-operator propagation.

Within an interval of constant |lambda| the generator is
``H_lambda = p_lambda^2 / 2m + V`` with ``p_lambda = -i lambda d/dq`` and the
propagator is ``exp(-i H_lambda dt / lambda)``, so the kinetic phase of mode
``k`` is ``lambda k^2 dt / 2m`` and the potential phase is ``V dt / lambda``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DensityFloor, StepTooLarge, TooFewSnapshots, ValidationError

NORM_TOL = 1e-10
POTENTIAL_GUARD = 0.1
DENSITY_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class GridState:
    psi: np.ndarray
    dx: float
    potential: np.ndarray
    x_min: float

    def __post_init__(self):
        psi = np.array(self.psi, dtype=complex, copy=True)
        pot = np.array(self.potential, dtype=float, copy=True)
        n = psi.size
        if psi.ndim != 1 or n < 64 or n & (n - 1):
            raise ValidationError(f"n_points must be a power of two >= 64, got {n}")
        if pot.shape != psi.shape:
            raise ValidationError("potential must have one value per grid point")
        if not self.dx > 0:
            raise ValidationError("dx must be positive")
        norm = float(np.sum(np.abs(psi) ** 2) * self.dx)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"grid state norm {norm!r} differs from 1")
        psi.flags.writeable = False
        pot.flags.writeable = False
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "potential", pot)

    @property
    def n_points(self) -> int:
        return self.psi.size

    @property
    def length(self) -> float:
        return self.n_points * self.dx

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        return wavenumbers(self.n_points, self.dx)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def norm(self) -> float:
        return float(np.sum(self.density) * self.dx)

    def mean_position(self) -> float:
        return float(np.sum(self.x * self.density) * self.dx)

    def mean_momentum(self, lam: float = 1.0) -> float:
        return mean_momentum(self.psi, self.dx, lam)

    def with_psi(self, psi) -> "GridState":
        return GridState(psi, self.dx, self.potential, self.x_min)


def wavenumbers(n: int, dx: float) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(n, d=dx)


def spectral_derivative(f: np.ndarray, dx: float) -> np.ndarray:
    k = wavenumbers(f.shape[-1], dx)
    return np.fft.ifft(1j * k * np.fft.fft(f, axis=-1), axis=-1)


def mean_momentum(psi: np.ndarray, dx: float, lam: float = 1.0) -> float:
    """``<p_lambda>`` from the discrete Fourier amplitudes."""
    k = wavenumbers(psi.shape[-1], dx)
    w = np.abs(np.fft.fft(psi, axis=-1)) ** 2
    return np.sum(lam * k * w, axis=-1) / np.sum(w, axis=-1)


def make_grid(n_points: int, length: float, center: float = 0.0):
    """Return ``(x, dx, x_min)`` for a periodic grid of ``n_points`` on ``length``."""
    dx = length / n_points
    x_min = center - length / 2
    return x_min + dx * np.arange(n_points), dx, x_min


def gaussian_packet(x: np.ndarray, dx: float, center: float, width: float,
                    k0: float = 0.0) -> np.ndarray:
    """Normalised Gaussian whose density has standard deviation ``width``."""
    psi = np.exp(-((x - center) ** 2) / (4 * width ** 2) + 1j * k0 * x)
    return psi / np.sqrt(np.sum(np.abs(psi) ** 2) * dx)


def harmonic_potential(x: np.ndarray, mass: float, omega: float) -> np.ndarray:
    return 0.5 * mass * omega ** 2 * x ** 2


def coherent_state(n_points: int, length: float, mass: float, omega: float, q0: float,
                   p0: float = 0.0, lam: float = 1.0) -> GridState:
    x, dx, x_min = make_grid(n_points, length)
    width = np.sqrt(lam / (2 * mass * omega))
    psi = gaussian_packet(x, dx, q0, width, p0 / lam)
    return GridState(psi, dx, harmonic_potential(x, mass, omega), x_min)


def _phases(state: GridState, dt: float, lam: float, mass: float):
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    vmax = float(np.max(np.abs(state.potential))) if state.potential.size else 0.0
    if dt * vmax / lam > POTENTIAL_GUARD * (1 + 1e-12):
        raise StepTooLarge(f"dt*max|V|/lambda = {dt * vmax / lam:.3g} exceeds {POTENTIAL_GUARD}")
    half_v = np.exp(-0.5j * state.potential * dt / lam)
    kin = np.exp(-0.5j * lam * state.k ** 2 * dt / mass)
    return half_v, kin


def split_step(state: GridState, dt: float, lam: float = 1.0, mass: float = 1.0) -> GridState:
    """One Strang step: half potential, full kinetic in Fourier space, half potential."""
    half_v, kin = _phases(state, dt, lam, mass)
    psi = half_v * np.fft.ifft(kin * np.fft.fft(half_v * state.psi))
    return state.with_psi(psi)


@dataclass(frozen=True, eq=False)
class GridSeries:
    """Uniformly spaced snapshots of one grid run."""

    times: np.ndarray
    psis: np.ndarray
    dx: float
    x_min: float
    potential: np.ndarray
    lam: float = 1.0

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.psis.shape[1])

    def state(self, k: int) -> GridState:
        return GridState(self.psis[k], self.dx, self.potential, self.x_min)

    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.psis) ** 2, axis=1) * self.dx

    def mean_positions(self) -> np.ndarray:
        return (np.abs(self.psis) ** 2 @ self.x) * self.dx

    def mean_momenta(self) -> np.ndarray:
        return mean_momentum(self.psis, self.dx, self.lam)


def propagate(state: GridState, dt: float, n_steps: int, lam: float = 1.0, mass: float = 1.0,
              record_every: int = 1) -> GridSeries:
    """Repeated Strang steps; adjacent half-potential kicks are fused."""
    if n_steps < 0 or record_every < 1:
        raise ValidationError("need n_steps >= 0 and record_every >= 1")
    half_v, kin = _phases(state, dt, lam, mass)
    full_v = half_v * half_v
    psi = half_v * state.psi
    shots = [state.psi.copy()]
    for step in range(1, n_steps + 1):
        psi = np.fft.ifft(kin * np.fft.fft(psi))
        if step % record_every == 0:
            shots.append(half_v * psi)
        psi = full_v * psi
    times = dt * record_every * np.arange(len(shots))
    return GridSeries(times, np.array(shots), state.dx, state.x_min, state.potential, lam)


def final_state(series: GridSeries) -> GridState:
    return series.state(-1)


def velocity_field(state: GridState, mass: float = 1.0, lam: float = 1.0,
                   floor: float = DENSITY_FLOOR, strict: bool = False) -> np.ndarray:
    """``v = lam Im(psi* dpsi/dq) / (m |psi|^2)``.

    Equal to ``(1/m) dS/dq`` for ``psi = sqrt(rho) exp(i S / lam)`` but needs
    no phase unwrapping.  Points with density at or below ``floor`` are NaN
    (or raise :class:`DensityFloor` with ``strict=True``).
    """
    psi = state.psi
    rho = np.abs(psi) ** 2
    dpsi = spectral_derivative(psi, state.dx)
    v = np.full(psi.shape, np.nan)
    ok = rho > floor
    if strict and not ok.all():
        raise DensityFloor(f"{int((~ok).sum())} grid points below density floor {floor}")
    v[ok] = lam * np.imag(np.conj(psi[ok]) * dpsi[ok]) / (mass * rho[ok])
    return v


def probability_current(psis: np.ndarray, dx: float, mass: float, lam: float) -> np.ndarray:
    dpsi = spectral_derivative(psis, dx)
    return lam * np.imag(np.conj(psis) * dpsi) / mass


@dataclass(frozen=True)
class EhrenfestReport:
    times: np.ndarray
    dp_dt: np.ndarray
    mean_force: np.ndarray
    abs_residual: float
    rel_residual: float


def ehrenfest_check(series: GridSeries, mass: float = 1.0, force: np.ndarray | None = None
                    ) -> EhrenfestReport:
    """Compare the central difference of ``<p>`` with ``<-dV/dq>`` at interior snapshots.

    ``force`` defaults to ``-dV/dq`` from second-order finite differences of
    the stored potential.
    """
    if series.psis.shape[0] < 5:
        raise TooFewSnapshots("need at least 5 snapshots")
    dt = series.times[1] - series.times[0]
    p = series.mean_momenta()
    f = -np.gradient(series.potential, series.dx, edge_order=2) if force is None else force
    rho = np.abs(series.psis) ** 2 * series.dx
    mf = (rho @ f)[1:-1]
    dp = (p[2:] - p[:-2]) / (2 * dt)
    diff = np.abs(dp - mf)
    scale = float(np.max(np.abs(mf)))
    abs_res = float(np.max(diff))
    rel = abs_res / scale if scale > 0 else abs_res
    return EhrenfestReport(series.times[1:-1], dp, mf, abs_res, rel)


@dataclass(frozen=True)
class ContinuityReport:
    raw: float
    normalized: float


def continuity_residual(series: GridSeries, mass: float = 1.0) -> ContinuityReport:
    """Largest ``|d rho/dt + d(v rho)/dq|`` over interior snapshots.

    ``v rho`` is the probability current, evaluated spectrally from psi, and
    ``d rho/dt`` is a central difference.  ``normalized`` divides by
    ``max rho / dt`` with ``dt`` the snapshot spacing.
    """
    if series.psis.shape[0] < 5:
        raise TooFewSnapshots("need at least 5 snapshots")
    dt = series.times[1] - series.times[0]
    rho = np.abs(series.psis) ** 2
    j = probability_current(series.psis[1:-1], series.dx, mass, series.lam)
    djdq = spectral_derivative(j, series.dx).real
    res = (rho[2:] - rho[:-2]) / (2 * dt) + djdq
    raw = float(np.max(np.abs(res)))
    return ContinuityReport(raw, raw / (float(np.max(rho)) / dt))
