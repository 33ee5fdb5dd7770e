"""Piecewise-constant-lambda unitary evolution.

During an interval with fixed |lambda| the state evolves with
``U = exp(-i H_lambda tau / lambda)``, evaluated through the spectral
decomposition of ``H_lambda``.  A lambda path is a sequence of such steps.
"""
from __future__ import annotations

import enum
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, MissingSplit, NonPositiveLambda, ValidationError
from .hilbert import (
    HermitianOperator,
    SpectralDecomposition,
    StateVector,
    spectral_decompose,
)
from .lambda_process import LambdaPath


class Mode(str, enum.Enum):
    FIXED_SPECTRUM = "FIXED_SPECTRUM"
    SCALED_KINETIC = "SCALED_KINETIC"


@dataclass(frozen=True, eq=False)
class LambdaHamiltonianSpec:
    """How the Hamiltonian depends on lambda.

    ``FIXED_SPECTRUM`` keeps ``H_lambda = H_hbar``: the spectrum is frozen
    and lambda only enters through the ``1/lambda`` in the propagator phase.
    ``SCALED_KINETIC`` uses ``(lambda/hbar)^2 T + V`` and needs the split.
    """

    base: HermitianOperator
    mode: Mode = Mode.FIXED_SPECTRUM
    kinetic: HermitianOperator | None = None
    potential: HermitianOperator | None = None
    hbar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.hbar <= 0:
            raise NonPositiveLambda(f"hbar must be positive, got {self.hbar}")
        if self.mode is Mode.SCALED_KINETIC:
            if self.kinetic is None or self.potential is None:
                raise MissingSplit("SCALED_KINETIC needs both kinetic and potential parts")
            diff = self.base.elements - self.kinetic.elements - self.potential.elements
            scale = max(1.0, float(np.max(np.abs(self.base.elements))))
            if np.max(np.abs(diff)) > 1e-12 * scale:
                raise ValidationError("base Hamiltonian differs from kinetic + potential")

    @property
    def dim(self) -> int:
        return self.base.dim

    @classmethod
    def from_split(cls, kinetic: HermitianOperator, potential: HermitianOperator,
                   mode: Mode = Mode.SCALED_KINETIC, hbar: float = 1.0) -> "LambdaHamiltonianSpec":
        return cls(kinetic + potential, mode, kinetic, potential, hbar)


@dataclass(frozen=True, eq=False)
class EvolutionRecord:
    times: np.ndarray
    states: np.ndarray
    path: LambdaPath

    def state(self, k: int) -> StateVector:
        return StateVector(self.states[k])

    @property
    def final(self) -> StateVector:
        return self.state(-1)

    def norm_drift(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.states, axis=1) - 1.0)))


def _check_lambda(lam: float) -> None:
    if not lam > 0:
        raise NonPositiveLambda(f"lambda must be > 0, got {lam}")


def hamiltonian_at_lambda(spec: LambdaHamiltonianSpec, lam: float) -> HermitianOperator:
    _check_lambda(lam)
    if spec.mode is Mode.FIXED_SPECTRUM:
        return spec.base
    if spec.kinetic is None or spec.potential is None:
        raise MissingSplit("SCALED_KINETIC needs a kinetic/potential split")
    ratio = lam / spec.hbar
    return HermitianOperator(ratio * ratio * spec.kinetic.elements + spec.potential.elements)


def unitary_from_spectrum(dec: SpectralDecomposition, lam: float, tau: float) -> np.ndarray:
    v = dec.eigenvectors
    phases = np.exp(-1j * dec.energies * (tau / lam))
    return (v * phases) @ v.conj().T


def unitary_step(h: HermitianOperator, lam: float, tau: float,
                 decomposition: SpectralDecomposition | None = None) -> np.ndarray:
    """``exp(-i H tau / lam)`` via ``Phi diag(exp(-i E tau / lam)) Phi^dagger``."""
    _check_lambda(lam)
    if tau < 0:
        raise ValidationError(f"tau must be >= 0, got {tau}")
    dec = spectral_decompose(h) if decomposition is None else decomposition
    return unitary_from_spectrum(dec, lam, tau)


class SpectralCache:
    """Thread-safe memo of decompositions of ``H_lambda``.

    Keys are ``round(ln(lambda) / rel_step)``, so lambdas within a relative
    distance of about ``rel_step`` share an entry and the decomposition is
    evaluated at the bin's representative lambda.  ``exact=True`` keys on the
    float value itself and never substitutes a neighbouring lambda.
    """

    def __init__(self, spec: LambdaHamiltonianSpec, rel_step: float = 1e-6,
                 maxsize: int = 4096, exact: bool = False):
        self.spec = spec
        self.rel_step = rel_step
        self.maxsize = maxsize
        self.exact = exact
        self._store: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _key(self, lam: float):
        if self.exact:
            return float(lam), float(lam)
        k = round(math.log(lam) / self.rel_step)
        return k, math.exp(k * self.rel_step)

    def get(self, lam: float) -> SpectralDecomposition:
        _check_lambda(lam)
        key, rep = self._key(lam)
        with self._lock:
            dec = self._store.get(key)
            if dec is not None:
                self._store.move_to_end(key)
                self.hits += 1
                return dec
        dec = spectral_decompose(hamiltonian_at_lambda(self.spec, rep))
        with self._lock:
            self.misses += 1
            self._store[key] = dec
            if len(self._store) > self.maxsize:
                self._store.popitem(last=False)
        return dec


def evolve_path(spec: LambdaHamiltonianSpec, psi0: StateVector, path: LambdaPath,
                cache: SpectralCache | None = None) -> EvolutionRecord:
    """Apply ``U_{lambda_n} ... U_{lambda_1}`` to ``psi0``, recording every step boundary."""
    if psi0.dim != spec.dim:
        raise DimMismatch(f"state dim {psi0.dim} != Hamiltonian dim {spec.dim}")
    tau = path.tau_lambda
    n = len(path)
    states = np.empty((n + 1, spec.dim), dtype=complex)
    states[0] = psi0.amplitudes
    if spec.mode is Mode.FIXED_SPECTRUM:
        dec = spectral_decompose(spec.base)
        v = dec.eigenvectors
        c = v.conj().T @ psi0.amplitudes
        # phases accumulate step by step so the chain mirrors the product of step unitaries
        for k, lam in enumerate(path.values, start=1):
            c = np.exp(-1j * dec.energies * (tau / lam)) * c
            states[k] = v @ c
    else:
        psi = psi0.amplitudes
        for k, lam in enumerate(path.values, start=1):
            if cache is not None:
                u = unitary_from_spectrum(cache.get(lam), lam, tau)
            else:
                u = unitary_step(hamiltonian_at_lambda(spec, lam), lam, tau)
            psi = u @ psi
            states[k] = psi
    states.flags.writeable = False
    times = tau * np.arange(n + 1)
    return EvolutionRecord(times, states, path)


def exact_unitary(h: HermitianOperator, t: float, hbar: float = 1.0) -> np.ndarray:
    """Standard quantum propagator ``exp(-i H t / hbar)``."""
    return unitary_step(h, hbar, t)
