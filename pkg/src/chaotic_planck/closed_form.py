"""Analytic decoherence predictions and the quadrature oracle behind them.

For one interval of length ``tau_lambda`` an energy-basis coherence
``rho_rs`` picks up the factor ``D = E[exp(-i omega_rs tau hbar / lambda)]``
with ``omega_rs = (E_r - E_s)/hbar``.  Linearising ``hbar/lambda`` around
``lambda = hbar`` turns the average over the log-normal law into a Gaussian
characteristic function, ``|D| = exp(-sigma^2 omega^2 tau^2 / 2)``, and ``n``
intervals multiply the exponent by ``n = t / tau``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import integrate

from .errors import DimMismatch, QuadratureNonConvergence, ZeroSigma
from .hilbert import DensityMatrix, HermitianOperator, spectral_decompose
from .lambda_process import LambdaParams

QUAD_HALF_WIDTH = 10.0  # in units of sigma, on the ln(lambda) axis


@dataclass(frozen=True)
class DecayPrediction:
    omega: float
    factor_per_step: complex
    rate: float

    def cumulative(self, t: float) -> float:
        """Decay exponent accumulated after time ``t``."""
        return self.rate * t


def gaussian_decay_factor(omega: float, p: LambdaParams) -> float:
    return math.exp(-0.5 * p.sigma ** 2 * omega ** 2 * p.tau_lambda ** 2)


def decay_rate(omega: float, p: LambdaParams) -> float:
    """Exponential decay rate of ``|rho_rs|`` per unit time."""
    return 0.5 * p.sigma ** 2 * omega ** 2 * p.tau_lambda


def predict(omega: float, p: LambdaParams) -> DecayPrediction:
    factor = np.exp(-1j * omega * p.tau_lambda) * gaussian_decay_factor(omega, p)
    return DecayPrediction(omega, complex(factor), decay_rate(omega, p))


def frequency_matrix(energies, hbar: float = 1.0) -> np.ndarray:
    e = np.asarray(energies, dtype=float)
    return (e[:, None] - e[None, :]) / hbar


def closed_form_matrix(rho0: np.ndarray, energies, p: LambdaParams, t: float) -> np.ndarray:
    """Energy-basis ``rho_rs(t) = rho_rs(0) exp(-i w_rs t) exp(-(sigma^2/2) w_rs^2 tau t)``."""
    rho0 = np.asarray(rho0, dtype=complex)
    w = frequency_matrix(energies, p.hbar)
    if rho0.shape != w.shape:
        raise DimMismatch(f"rho shape {rho0.shape} vs {len(w)} energies")
    return rho0 * np.exp(-1j * w * t - 0.5 * p.sigma ** 2 * w * w * p.tau_lambda * t)


def closed_form_rho(rho0: DensityMatrix, energies, p: LambdaParams, t: float) -> DensityMatrix:
    """Lambda-averaged density matrix at time ``t``; ``rho0`` must be in the energy basis."""
    if rho0.dim != len(energies):
        raise DimMismatch(f"rho dim {rho0.dim} vs {len(energies)} energies")
    return DensityMatrix(closed_form_matrix(rho0.elements, energies, p, t))


def closed_form_in_basis(rho0: DensityMatrix, h: HermitianOperator, p: LambdaParams,
                         t: float) -> DensityMatrix:
    """Same prediction for a ``rho0`` given in an arbitrary basis; result in that basis."""
    dec = spectral_decompose(h)
    rho_e = dec.to_energy_basis(rho0.elements)
    out = dec.from_energy_basis(closed_form_matrix(rho_e, dec.energies, p, t))
    return DensityMatrix(0.5 * (out + out.conj().T))


def _phase_exact(u, a):
    # hbar/lambda = exp(-u), u = ln(lambda) - mu
    return -a * np.exp(-u)


def _phase_linearized(u, a):
    return -a * (2.0 - np.exp(u))


_PHASES = {"exact": _phase_exact, "linearized": _phase_linearized}


def decay_factor_quadrature(omega: float, p: LambdaParams, form: str = "exact",
                            epsabs: float = 1e-12) -> complex:
    """Average of the one-interval coherence factor over the log-normal law.

    ``form="exact"`` integrates ``exp(-i omega tau hbar/lambda)``, the factor
    the piecewise-constant propagator applies with a frozen spectrum.
    ``form="linearized"`` integrates ``exp(-i omega tau (2 - lambda/hbar))``,
    the first-order expansion of ``hbar/lambda``.  Both are evaluated on the
    ``ln(lambda)`` axis over ``mu +/- 10 sigma``; the discarded Gaussian mass
    is ``erfc(10/sqrt 2) ~ 1.5e-23``.
    """
    if p.sigma <= 0:
        raise ZeroSigma("the quadrature oracle needs sigma > 0")
    a = omega * p.tau_lambda
    if a == 0:
        return 1.0 + 0.0j
    phase = _PHASES[form]
    s = p.sigma
    norm = 1.0 / math.sqrt(2.0 * math.pi)

    def re(z):
        return norm * math.exp(-0.5 * z * z) * math.cos(phase(s * z, a))

    def im(z):
        return norm * math.exp(-0.5 * z * z) * math.sin(phase(s * z, a))

    lo, hi = -QUAD_HALF_WIDTH, QUAD_HALF_WIDTH
    out = []
    for f in (re, im):
        val, err = integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=0.0, limit=2000)
        if not err <= max(1e-10, 10 * epsabs):
            raise QuadratureNonConvergence(f"quad error estimate {err:.2e} for omega={omega}")
        out.append(val)
    return complex(out[0], out[1])


def approximation_discrepancy(omega: float, p: LambdaParams, form: str = "exact") -> float:
    """Relative gap between the Gaussian factor and the magnitude of the quadrature."""
    q = abs(decay_factor_quadrature(omega, p, form))
    g = gaussian_decay_factor(omega, p)
    return abs(g - q) / q


def write_curve_csv(path, times: Iterable[float], rho0_rs: complex, omega: float,
                    p: LambdaParams) -> None:
    """CSV of ``t, abs, phase`` for one predicted coherence."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "abs", "phase"])
        for t in times:
            v = rho0_rs * np.exp(-1j * omega * t - decay_rate(omega, p) * t)
            w.writerow([repr(float(t)), repr(float(abs(v))), repr(float(np.angle(v)))])
