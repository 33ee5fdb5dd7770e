"""Finite-dimensional Hilbert-space primitives.

Operators, state vectors and density matrices are thin immutable wrappers
around complex numpy arrays.  Every function here is pure.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimMismatch, InvalidDensity, NonHermitian, NotNormalized

logger = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-12
NORM_TOL = 1e-12
TRACE_TOL = 1e-10
NEGATIVITY_TOL = 1e-9


def _frozen(a, dtype=complex) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def hermiticity_defect(m: np.ndarray) -> float:
    """Largest elementwise deviation of ``m`` from ``m^dagger``."""
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    elements: np.ndarray

    def __post_init__(self):
        m = _frozen(self.elements)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DimMismatch(f"operator must be a non-empty square matrix, got shape {m.shape}")
        scale = float(np.max(np.abs(m)))
        if scale > 0 and hermiticity_defect(m) > HERMITIAN_RTOL * scale:
            raise NonHermitian(f"|M - M^dagger|_max = {hermiticity_defect(m):.3e}")
        object.__setattr__(self, "elements", m)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    def norm(self) -> float:
        """Spectral norm, the energy scale used by step-size guards."""
        return float(np.linalg.norm(self.elements, 2))

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.elements + other.elements)

    def scaled(self, factor: float) -> "HermitianOperator":
        return HermitianOperator(factor * self.elements)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    energies: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.energies) @ v.conj().T

    def to_energy_basis(self, m: np.ndarray) -> np.ndarray:
        """Express a vector or matrix given in the original basis in the eigenbasis."""
        v = self.eigenvectors
        m = np.asarray(m)
        if m.ndim == 1:
            return v.conj().T @ m
        return v.conj().T @ m @ v

    def from_energy_basis(self, m: np.ndarray) -> np.ndarray:
        v = self.eigenvectors
        m = np.asarray(m)
        if m.ndim == 1:
            return v @ m
        return v @ m @ v.conj().T


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = _frozen(self.amplitudes)
        if a.ndim != 1 or a.size < 1:
            raise DimMismatch(f"state must be a non-empty vector, got shape {a.shape}")
        norm2 = float(np.vdot(a, a).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise NotNormalized(f"sum |psi_i|^2 = {norm2!r}")
        object.__setattr__(self, "amplitudes", a)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def normalized(cls, amplitudes: Sequence[complex]) -> "StateVector":
        a = np.asarray(amplitudes, dtype=complex)
        return cls(a / np.linalg.norm(a))

    @classmethod
    def basis(cls, dim: int, index: int) -> "StateVector":
        a = np.zeros(dim, dtype=complex)
        a[index] = 1.0
        return cls(a)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace matrix.

    Small negative eigenvalues (down to ``-NEGATIVITY_TOL``) are tolerated and
    logged, never clipped or renormalized here.
    """

    elements: np.ndarray

    def __post_init__(self):
        m = _frozen(self.elements)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DimMismatch(f"density matrix must be square, got shape {m.shape}")
        if hermiticity_defect(m) > HERMITIAN_RTOL * max(1.0, float(np.max(np.abs(m)))):
            raise InvalidDensity(f"not Hermitian: defect {hermiticity_defect(m):.3e}")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidDensity(f"trace {tr!r} differs from 1")
        object.__setattr__(self, "elements", m)
        lo = self.min_eigenvalue
        if lo < -NEGATIVITY_TOL:
            raise InvalidDensity(f"eigenvalue {lo:.3e} below -{NEGATIVITY_TOL}")
        if lo < 0:
            logger.debug("density matrix has tolerated negative eigenvalue %.3e", lo)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.elements)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)


def spectral_decompose(h: HermitianOperator) -> SpectralDecomposition:
    """Eigen-decomposition with ascending energies.

    Within degenerate blocks the returned basis is whatever LAPACK produces;
    callers must only rely on basis-covariant quantities.
    """
    m = h.elements
    energies, vecs = np.linalg.eigh(m)
    return SpectralDecomposition(_frozen(energies, float), _frozen(vecs))


def pure_density(psi: StateVector) -> DensityMatrix:
    a = psi.amplitudes
    return DensityMatrix(np.outer(a, a.conj()))


def expectation(rho: DensityMatrix, op: HermitianOperator) -> float:
    """Return Re Tr(O rho); a residual imaginary part above 1e-10 is logged."""
    if rho.dim != op.dim:
        raise DimMismatch(f"rho dim {rho.dim} != operator dim {op.dim}")
    val = np.einsum("ij,ji->", op.elements, rho.elements)
    if abs(val.imag) > 1e-10:
        logger.warning("expectation value has imaginary residual %.3e", val.imag)
    return float(val.real)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy in nats, with eigenvalues clipped to [0, 1] and 0 ln 0 = 0."""
    w = rho.eigenvalues
    if w[0] < -NEGATIVITY_TOL:
        raise InvalidDensity(f"eigenvalue {w[0]:.3e} below tolerance")
    w = np.clip(w, 0.0, 1.0)
    nz = w[w > 0]
    return float(max(0.0, -np.sum(nz * np.log(nz))))


def trace_distance(rho1: DensityMatrix, rho2: DensityMatrix) -> float:
    if rho1.dim != rho2.dim:
        raise DimMismatch(f"{rho1.dim} != {rho2.dim}")
    return trace_distance_matrix(rho1.elements, rho2.elements)


def trace_distance_matrix(a: np.ndarray, b: np.ndarray) -> float:
    """Trace distance between raw Hermitian arrays (no validation)."""
    s = np.linalg.svd(np.asarray(a) - np.asarray(b), compute_uv=False)
    return float(0.5 * np.sum(s))


def partial_trace_matrix(m: np.ndarray, dims: tuple[int, int], keep: int) -> np.ndarray:
    d1, d2 = dims
    if m.shape != (d1 * d2, d1 * d2):
        raise DimMismatch(f"matrix shape {m.shape} incompatible with dims {dims}")
    t = np.asarray(m).reshape(d1, d2, d1, d2)
    if keep == 1:
        return np.einsum("ajbj->ab", t)
    if keep == 2:
        return np.einsum("iaib->ab", t)
    raise DimMismatch(f"keep must be 1 or 2, got {keep}")


def partial_trace(rho: DensityMatrix, dims: tuple[int, int], keep: int) -> DensityMatrix:
    """Reduced state of subsystem ``keep`` (1 or 2) of a bipartite ``d1 x d2`` system."""
    return DensityMatrix(partial_trace_matrix(rho.elements, dims, keep))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> HermitianOperator:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return HermitianOperator(scale * (a + a.conj().T) / (2 * np.sqrt(dim)))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m / np.trace(m).real)


def random_state(dim: int, rng: np.random.Generator) -> StateVector:
    return StateVector.normalized(rng.normal(size=dim) + 1j * rng.normal(size=dim))
