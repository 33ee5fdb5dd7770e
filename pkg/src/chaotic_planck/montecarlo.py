"""Monte Carlo estimate of the lambda-averaged density matrix.

Each sample draws an independent lambda path, evolves the pure state along
it and contributes its projector.  Samples are grouped into fixed-size chunks
whose moment sums are added in chunk order, so the estimate depends on
``(seed, n_samples, chunk_size)`` only, never on the number of workers.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import DimMismatch, IndexOutOfRange, NonCommensurateTime, ValidationError
from .hilbert import DensityMatrix, StateVector, spectral_decompose
from .lambda_process import LambdaParams, LambdaPath, log_lambda_block
from .propagator import LambdaHamiltonianSpec, Mode, evolve_path

DEFAULT_CHUNK = 256


def default_workers() -> int:
    env = os.environ.get("CHAOTIC_PLANCK_WORKERS")
    return max(1, int(env)) if env else 1


def steps_for(t_final: float, tau: float) -> int:
    n = round(t_final / tau)
    if n < 1 or abs(n * tau - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise NonCommensurateTime(f"t_final={t_final} is not a positive multiple of tau_lambda={tau}")
    return int(n)


@dataclass(frozen=True, eq=False)
class McEstimate:
    """Averaged density matrices at ``t_k = k tau`` for ``k = 0..n``.

    Everything is expressed in the eigenbasis of the base Hamiltonian
    (``eigenvectors`` maps back).  ``stderr_re``/``stderr_im`` are
    componentwise standard errors; ``cov_reim`` is the estimated covariance of
    the real and imaginary parts of the mean, used for magnitudes.
    """

    times: np.ndarray
    rho_tilde: np.ndarray
    stderr_re: np.ndarray
    stderr_im: np.ndarray
    cov_reim: np.ndarray
    n_samples: int
    seed: int
    energies: np.ndarray
    eigenvectors: np.ndarray

    @property
    def stderr(self) -> np.ndarray:
        return np.hypot(self.stderr_re, self.stderr_im)

    def density(self, k: int = -1) -> DensityMatrix:
        return DensityMatrix(self.rho_tilde[k])

    def in_original_basis(self, k: int = -1) -> np.ndarray:
        v = self.eigenvectors
        return v @ self.rho_tilde[k] @ v.conj().T

    def magnitude(self, r: int, s: int):
        """``|rho_rs|`` per recorded time with a delta-method standard error."""
        d = self.rho_tilde.shape[1]
        if not (0 <= r < d and 0 <= s < d):
            raise IndexOutOfRange(f"element ({r}, {s}) outside dim {d}")
        z = self.rho_tilde[:, r, s]
        mag = np.abs(z)
        with np.errstate(invalid="ignore", divide="ignore"):
            gr = np.where(mag > 0, z.real / mag, 1.0)
            gi = np.where(mag > 0, z.imag / mag, 0.0)
        var = (gr * self.stderr_re[:, r, s]) ** 2 + (gi * self.stderr_im[:, r, s]) ** 2 \
            + 2 * gr * gi * self.cov_reim[:, r, s]
        return mag, np.sqrt(np.clip(var, 0.0, None))


def _chunk_moments_fixed(coeffs, energies, p, seed, lo, hi, n):
    x = log_lambda_block(p, seed, np.arange(lo, hi), n)
    theta = p.tau_lambda * np.cumsum(np.exp(-x), axis=1)
    return kernels.fixed_spectrum_moments(coeffs, energies, np.ascontiguousarray(theta))


def _chunk_moments_scaled(spec, dec, psi0, p, seed, lo, hi, n):
    x = log_lambda_block(p, seed, np.arange(lo, hi), n)
    lam = np.exp(x)
    t_op, v_op = spec.kinetic.elements, spec.potential.elements
    tau = p.tau_lambda
    psi = np.broadcast_to(psi0, (hi - lo, psi0.size)).copy()
    states = np.empty((hi - lo, n, psi0.size), dtype=complex)
    proj = dec.eigenvectors.conj().T
    for k in range(n):
        a = (lam[:, k] / spec.hbar) ** 2
        h = a[:, None, None] * t_op + v_op
        e, w = np.linalg.eigh(h)
        c = np.einsum("sji,sj->si", w.conj(), psi)
        c *= np.exp(-1j * e * (tau / lam[:, k, None]))
        psi = np.einsum("sij,sj->si", w, c)
        states[:, k] = psi @ proj.T
    return kernels.state_moments(states)


def average_density(spec: LambdaHamiltonianSpec, p: LambdaParams, psi0: StateVector,
                    t_final: float, n_samples: int, seed: int, workers: int | None = None,
                    chunk_size: int = DEFAULT_CHUNK) -> McEstimate:
    """Average ``|psi_s(t)><psi_s(t)|`` over ``n_samples`` independent lambda paths."""
    if psi0.dim != spec.dim:
        raise DimMismatch(f"state dim {psi0.dim} != Hamiltonian dim {spec.dim}")
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    if chunk_size < 1:
        raise ValidationError("chunk_size must be >= 1")
    if abs(p.hbar - spec.hbar) > 1e-12 * spec.hbar:
        raise ValidationError(f"exp(mu)={p.hbar} differs from the Hamiltonian's hbar={spec.hbar}")
    n = steps_for(t_final, p.tau_lambda)
    workers = default_workers() if workers is None else max(1, int(workers))
    dec = spectral_decompose(spec.base)
    d = spec.dim
    times = p.tau_lambda * np.arange(n + 1)
    c0 = dec.eigenvectors.conj().T @ psi0.amplitudes
    rho0 = np.outer(c0, c0.conj())

    zeros = np.zeros((n + 1, d, d))
    if p.sigma == 0:
        # delta-distributed lambda: every sample follows the standard evolution
        rec = evolve_path(spec, psi0, LambdaPath.constant(spec.hbar, n, p.tau_lambda))
        c = rec.states @ dec.eigenvectors.conj()
        rho = c[:, :, None] * c[:, None, :].conj()
        return McEstimate(times, rho, zeros, zeros.copy(), zeros.copy(), n_samples, seed,
                          dec.energies, dec.eigenvectors)

    bounds = [(lo, min(lo + chunk_size, n_samples)) for lo in range(0, n_samples, chunk_size)]
    if spec.mode is Mode.FIXED_SPECTRUM:
        def job(b):
            return _chunk_moments_fixed(c0, np.ascontiguousarray(dec.energies), p, seed, b[0], b[1], n)
    else:
        def job(b):
            return _chunk_moments_scaled(spec, dec, psi0.amplitudes, p, seed, b[0], b[1], n)

    if workers == 1 or len(bounds) == 1:
        parts = [job(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, bounds))
    m1, sre, sim, sx = parts[0]
    m1, sre, sim, sx = m1.copy(), sre.copy(), sim.copy(), sx.copy()
    for q in parts[1:]:
        m1 += q[0]
        sre += q[1]
        sim += q[2]
        sx += q[3]

    N = n_samples
    mean = m1 / N
    if N > 1:
        var_re = np.clip((sre - N * mean.real ** 2) / (N - 1), 0.0, None)
        var_im = np.clip((sim - N * mean.imag ** 2) / (N - 1), 0.0, None)
        cov = (sx - N * mean.real * mean.imag) / (N - 1)
        se_re, se_im, cov = np.sqrt(var_re / N), np.sqrt(var_im / N), cov / N
    else:
        se_re = np.full_like(mean.real, np.inf)
        se_im = np.full_like(mean.real, np.inf)
        cov = np.zeros_like(mean.real)
    rho = np.concatenate([rho0[None], mean])
    se_re = np.concatenate([zeros[:1], se_re])
    se_im = np.concatenate([zeros[:1], se_im])
    cov = np.concatenate([zeros[:1], cov])
    return McEstimate(times, rho, se_re, se_im, cov, N, seed, dec.energies, dec.eigenvectors)


@dataclass(frozen=True, eq=False)
class CoherenceSeries:
    times: np.ndarray
    magnitude: np.ndarray
    stderr: np.ndarray
    element: tuple


def coherence_series(spec, p, psi0, t_final, n_samples, seed, element=(0, 1),
                     workers=None, estimate: McEstimate | None = None) -> CoherenceSeries:
    """``|rho_rs(t_k)|`` with standard errors for ``k = 1..n`` in the energy basis."""
    r, s = element
    if not (0 <= r < spec.dim and 0 <= s < spec.dim):
        raise IndexOutOfRange(f"element {element} outside dim {spec.dim}")
    est = estimate or average_density(spec, p, psi0, t_final, n_samples, seed, workers)
    mag, se = est.magnitude(r, s)
    return CoherenceSeries(est.times[1:], mag[1:], se[1:], (r, s))


def fit_decay_rate(times, magnitudes, window=(0.1, 0.9), initial=None) -> tuple[float, int]:
    """Least-squares slope of ``-ln|rho|`` vs t over points whose magnitude lies
    in ``window`` times the initial magnitude.  Returns (rate, points used)."""
    from .errors import FitFailure

    t = np.asarray(times, dtype=float)
    m = np.asarray(magnitudes, dtype=float)
    m0 = m[0] if initial is None else initial
    if not m0 > 0:
        raise FitFailure("initial coherence is zero")
    sel = (m >= window[0] * m0) & (m <= window[1] * m0)
    if sel.sum() < 3:
        raise FitFailure(f"only {int(sel.sum())} points inside the fit window")
    slope, _ = np.polyfit(t[sel], np.log(m[sel]), 1)
    return float(-slope), int(sel.sum())


def write_csv(path, est: McEstimate, elements) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["t"]
        for r, s in elements:
            head += [f"rho_{r}{s}_re", f"rho_{r}{s}_im", f"stderr_{r}{s}_re", f"stderr_{r}{s}_im"]
        w.writerow(head)
        for k, t in enumerate(est.times):
            row = [repr(float(t))]
            for r, s in elements:
                z = est.rho_tilde[k, r, s]
                row += [repr(float(z.real)), repr(float(z.imag)),
                        repr(float(est.stderr_re[k, r, s])), repr(float(est.stderr_im[k, r, s]))]
            w.writerow(row)


def summary(est: McEstimate, p: LambdaParams) -> dict:
    return {
        "seed": est.seed,
        "n_samples": est.n_samples,
        "n_steps": int(est.times.size - 1),
        "params": {"mu": p.mu, "sigma": p.sigma, "tau_lambda": p.tau_lambda, "ar1": p.ar1},
        "min_eigenvalue_final": float(np.linalg.eigvalsh(est.rho_tilde[-1])[0]),
        "trace_final": float(np.trace(est.rho_tilde[-1]).real),
    }


def write_summary(path, est: McEstimate, p: LambdaParams) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary(est, p), fh, indent=2, sort_keys=True)
        fh.write("\n")


def stderr_scaling(stderrs, ns) -> np.ndarray:
    """Ratios ``stderr(N) * sqrt(N)`` normalised to the first entry."""
    v = np.asarray(stderrs) * np.sqrt(np.asarray(ns, dtype=float))
    return v / v[0]


__all__ = [
    "McEstimate", "CoherenceSeries", "average_density", "coherence_series",
    "fit_decay_rate", "write_csv", "write_summary", "steps_for",
]
