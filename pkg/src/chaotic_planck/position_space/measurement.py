"""Pointer-based measurement of a finite-dimensional observable.

System and pointer are coupled by ``H_I = g_C Lambda (x) p``.  In the
eigenbasis of ``Lambda`` the pointer packet of branch ``l`` is translated
rigidly by ``g_C omega_l t``; the joint state stays
``sum_l c_l |l> chi0(q - g_C omega_l t)``.  Translation is applied with the
Fourier shift theorem, which is exact for the discrete band-limited packet.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import AmbiguousPointer, ValidationError
from .grid import GridState, wavenumbers

OVERLAP_LIMIT = 1e-3
WRAP_MARGIN = 20.0


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    amplitudes: np.ndarray
    eigenvalues: np.ndarray
    coupling: float
    pointer0: GridState

    def __post_init__(self):
        c = np.array(self.amplitudes, dtype=complex, copy=True)
        w = np.array(self.eigenvalues, dtype=float, copy=True)
        if c.shape != w.shape or c.ndim != 1:
            raise ValidationError("need one eigenvalue per amplitude")
        if abs(np.sum(np.abs(c) ** 2) - 1.0) > 1e-12:
            raise ValidationError("amplitudes must be normalised")
        object.__setattr__(self, "amplitudes", c)
        object.__setattr__(self, "eigenvalues", w)

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def distinct(self) -> bool:
        return np.unique(self.eigenvalues).size == self.eigenvalues.size


@dataclass(frozen=True, eq=False)
class MeasurementState:
    t: float
    amplitudes: np.ndarray
    branches: np.ndarray
    centers: np.ndarray
    overlaps: np.ndarray
    dx: float
    x: np.ndarray

    @property
    def max_overlap(self) -> float:
        o = self.overlaps.copy()
        np.fill_diagonal(o, 0.0)
        return float(o.max()) if o.size > 1 else 0.0

    def pointer_density(self) -> np.ndarray:
        """Marginal pointer density ``sum_l |c_l|^2 |chi_l(q)|^2``."""
        return np.abs(self.amplitudes) ** 2 @ (np.abs(self.branches) ** 2)

    def joint(self) -> np.ndarray:
        """Joint amplitudes, shape (n_branches, n_points), system index first."""
        return self.amplitudes[:, None] * self.branches


def evolve_measurement(model: MeasurementModel, t: float) -> MeasurementState:
    if t < 0:
        raise ValidationError("t must be >= 0")
    chi = model.pointer0
    shifts = model.coupling * model.eigenvalues * t
    if shifts.size and np.max(np.abs(shifts)) * WRAP_MARGIN > chi.length:
        raise ValidationError(
            f"pointer displacement {np.max(np.abs(shifts)):.3g} needs a domain at least "
            f"{WRAP_MARGIN:g}x wider than {chi.length:.3g}")
    k = wavenumbers(chi.n_points, chi.dx)
    spec = np.fft.fft(chi.psi)
    branches = np.fft.ifft(spec[None, :] * np.exp(-1j * np.outer(shifts, k)), axis=1)
    overlaps = np.abs(branches.conj() @ branches.T) * chi.dx
    centers = chi.mean_position() + shifts
    return MeasurementState(t, model.amplitudes, branches, centers, overlaps, chi.dx, chi.x)


@dataclass(frozen=True)
class OutcomeStats:
    counts: np.ndarray
    n_trials: int
    probabilities: np.ndarray

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n_trials

    @property
    def stderr(self) -> np.ndarray:
        f = self.frequencies
        return np.sqrt(f * (1 - f) / self.n_trials)

    def chi_square(self):
        """Pearson statistic and p-value against the Born weights (zero-weight outcomes dropped)."""
        keep = self.probabilities > 0
        if keep.sum() < 2:
            return 0.0, 1.0
        exp = self.probabilities[keep] * self.n_trials
        res = stats.chisquare(self.counts[keep], exp)
        return float(res.statistic), float(res.pvalue)

    def to_json(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "counts": self.counts.tolist(),
            "frequencies": self.frequencies.tolist(),
            "stderr": self.stderr.tolist(),
            "born_probabilities": self.probabilities.tolist(),
        }


def sample_outcomes(model: MeasurementModel, t: float, n_trials: int,
                    rng: np.random.Generator) -> OutcomeStats:
    """Read the pointer ``n_trials`` times and assign each reading to the nearest branch.

    Positions are drawn from the marginal pointer density, as a grid cell
    followed by a uniform offset inside the cell.  Readout is refused while
    any two branches overlap by ``OVERLAP_LIMIT`` or more.
    """
    if n_trials < 1:
        raise ValidationError("n_trials must be >= 1")
    st = evolve_measurement(model, t)
    if not model.distinct or st.max_overlap >= OVERLAP_LIMIT:
        raise AmbiguousPointer(f"branch overlap {st.max_overlap:.3g} >= {OVERLAP_LIMIT}")
    dens = st.pointer_density() * st.dx
    dens = dens / dens.sum()
    cells = rng.choice(dens.size, size=n_trials, p=dens)
    q = st.x[cells] + st.dx * (rng.random(n_trials) - 0.5)
    length = st.dx * st.x.size
    delta = q[:, None] - st.centers[None, :]
    delta -= length * np.round(delta / length)
    outcome = np.argmin(np.abs(delta), axis=1)
    counts = np.bincount(outcome, minlength=st.centers.size)
    return OutcomeStats(counts, n_trials, model.weights)


def write_histogram(path, outcome: OutcomeStats) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(outcome.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
