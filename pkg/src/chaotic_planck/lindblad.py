"""Double-commutator master equation

    d rho/dt = -(i/hbar) [H, rho] - alpha^2 [H, [H, rho]],
    alpha = (sigma / hbar) sqrt(tau_lambda / 2),

i.e. a Lindblad equation whose single jump operator is proportional to H.
Integrated with fixed-step classical RK4.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import DimMismatch, StepTooLarge, ValidationError
from .hilbert import DensityMatrix, HermitianOperator, von_neumann_entropy
from .lambda_process import LambdaParams

logger = logging.getLogger(__name__)

STABILITY_GUARD = 0.05


@dataclass(frozen=True)
class LindbladConfig:
    alpha: float
    dt_int: float
    hbar: float = 1.0
    method: str = "rk4"

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        if not self.dt_int > 0:
            raise ValidationError(f"dt_int must be > 0, got {self.dt_int}")
        if self.method != "rk4":
            raise ValidationError("only fixed-step rk4 is supported")

    @classmethod
    def from_params(cls, p: LambdaParams, h: HermitianOperator, dt_int: float | None = None):
        dt = default_dt(p, h) if dt_int is None else dt_int
        if dt > p.tau_lambda / 10:
            raise ValidationError(f"dt_int={dt} exceeds tau_lambda/10")
        return cls(alpha_from_params(p), dt, p.hbar)


def alpha_from_params(p: LambdaParams) -> float:
    return p.sigma / p.hbar * math.sqrt(p.tau_lambda / 2.0)


def default_dt(p: LambdaParams, h: HermitianOperator) -> float:
    norm = h.norm()
    return p.tau_lambda / 20 if norm == 0 else min(p.tau_lambda / 20, STABILITY_GUARD * p.hbar / norm)


def dt_for_accuracy(h: HermitianOperator, alpha: float, t_final: float, hbar: float = 1.0,
                    tol: float = 1e-10) -> float:
    """Step for which the RK4 global error estimate ``t L^5 dt^4 / 120`` is ``tol``.

    ``L`` bounds the Liouvillian eigenvalues, ``|w| + alpha^2 hbar^2 w^2`` at
    the largest Bohr frequency ``w``.  Never exceeds the stability guard.
    """
    e = np.linalg.eigvalsh(h.elements)
    spread = float(e[-1] - e[0])
    guard = STABILITY_GUARD * hbar / max(h.norm(), 1e-300)
    if spread == 0 or t_final <= 0:
        return guard
    w = spread / hbar
    rate = w + alpha ** 2 * spread ** 2
    dt = (120.0 * tol / (t_final * rate ** 5)) ** 0.25
    return min(dt, guard)


def master_rhs(rho: DensityMatrix | np.ndarray, h: HermitianOperator, alpha: float,
               hbar: float = 1.0) -> np.ndarray:
    m = rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    hm = h.elements
    if m.shape != hm.shape:
        raise DimMismatch(f"rho shape {m.shape} vs H shape {hm.shape}")
    c = hm @ m - m @ hm
    return (-1j / hbar) * c - alpha ** 2 * (hm @ c - c @ hm)


@dataclass(frozen=True, eq=False)
class LindbladRun:
    times: np.ndarray
    rhos: np.ndarray
    symmetrization: float
    h: HermitianOperator = field(repr=False)

    def density(self, k: int = -1) -> DensityMatrix:
        return DensityMatrix(self.rhos[k])

    def energies(self) -> np.ndarray:
        return np.einsum("ij,tji->t", self.h.elements, self.rhos).real

    def expectations(self, op: HermitianOperator) -> np.ndarray:
        return np.einsum("ij,tji->t", op.elements, self.rhos).real

    def traces(self) -> np.ndarray:
        return np.einsum("tii->t", self.rhos)

    def entropies(self) -> np.ndarray:
        return np.array([von_neumann_entropy(DensityMatrix(r)) for r in self.rhos])

    def min_eigenvalues(self) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(r)[0] for r in self.rhos])


def integrate(rho0: DensityMatrix, h: HermitianOperator, alpha: float, t_final: float,
              dt_int: float, hbar: float = 1.0, record_every: int = 1) -> LindbladRun:
    """Fixed-step RK4 from 0 to ``t_final``.

    ``t_final / dt_int`` is rounded to the nearest integer number of steps and
    the step is adjusted to land exactly on ``t_final``.  The trace is never
    renormalised.
    """
    if rho0.dim != h.dim:
        raise DimMismatch(f"rho dim {rho0.dim} vs H dim {h.dim}")
    if not dt_int > 0 or t_final < 0:
        raise ValidationError("need dt_int > 0 and t_final >= 0")
    n_steps = max(1, int(round(t_final / dt_int))) if t_final > 0 else 0
    dt = t_final / n_steps if n_steps else dt_int
    if dt * h.norm() / hbar > STABILITY_GUARD * (1 + 1e-12):
        raise StepTooLarge(f"dt*|H|/hbar = {dt * h.norm() / hbar:.3g} exceeds {STABILITY_GUARD}")
    if record_every < 1:
        raise ValidationError("record_every must be >= 1")
    if n_steps == 0:
        return LindbladRun(np.zeros(1), rho0.elements[None].copy(), 0.0, h)
    rhos, worst = kernels.rk4_double_commutator(
        np.ascontiguousarray(rho0.elements), np.ascontiguousarray(h.elements),
        float(alpha), float(hbar), float(dt), int(n_steps), int(record_every))
    if worst > 0:
        logger.debug("largest Hermitian symmetrisation correction %.3e", worst)
    times = dt * record_every * np.arange(rhos.shape[0])
    return LindbladRun(times, np.asarray(rhos), float(worst), h)


def integrate_to_times(rho0: DensityMatrix, h: HermitianOperator, alpha: float, tau: float,
                       n_records: int, dt_int: float, hbar: float = 1.0) -> LindbladRun:
    """Integrate with records exactly at ``k tau``; ``dt_int`` is shrunk to divide ``tau``."""
    sub = max(1, math.ceil(tau / dt_int - 1e-9))
    return integrate(rho0, h, alpha, n_records * tau, tau / sub, hbar, record_every=sub)


def write_csv(path, run: LindbladRun, elements) -> None:
    energies = run.energies()
    entropies = run.entropies()
    mins = run.min_eigenvalues()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["t"]
        for r, s in elements:
            head += [f"rho_{r}{s}_re", f"rho_{r}{s}_im"]
        w.writerow(head + ["energy", "entropy", "min_eigenvalue"])
        for k, t in enumerate(run.times):
            row = [repr(float(t))]
            for r, s in elements:
                z = run.rhos[k, r, s]
                row += [repr(float(z.real)), repr(float(z.imag))]
            row += [repr(float(energies[k])), repr(float(entropies[k])), repr(float(mins[k]))]
            w.writerow(row)
