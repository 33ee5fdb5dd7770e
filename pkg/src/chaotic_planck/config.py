"""Flat JSON run configuration.

Every key has a default; unknown keys are rejected.  ``to_dict`` followed by
``from_dict`` is the identity, and the persisted copy of a run's config
already contains every override that was applied.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigError
from .hilbert import HermitianOperator, StateVector, random_hermitian, spectral_decompose
from .lambda_process import LambdaParams
from .propagator import LambdaHamiltonianSpec, Mode

SCHEMA_VERSION = 1
SYSTEMS = ("qubit", "ladder", "harmonic", "random", "matrix")
SWEEP_AXES = ("sigma", "tau_lambda", "omega")
ROUTES = ("montecarlo", "closed_form", "lindblad")


@dataclass
class RunConfig:
    # system
    system: str = "qubit"
    omega: float = 5.0
    levels: int = 2
    matrix_file: str | None = None
    random_dim: int = 8
    random_seed: int = 0
    mode: str = "FIXED_SPECTRUM"
    mass: float = 1.0
    # lambda law
    mu: float = 0.0
    sigma: float = 0.1
    tau_lambda: float = 0.2
    ar1: float = 0.0
    # run
    initial_state: Any = "uniform"
    t_final: float = 8.0
    n_samples: int = 10000
    seed: int | None = None
    workers: int = 1
    chunk_size: int = 256
    dt_int: float | None = None
    element: list = field(default_factory=lambda: [0, 1])
    # acceptance thresholds
    mc_stderr_factor: float = 3.0
    mc_rel_tol: float = 0.05
    route_abs_tol: float = 1e-8
    conservation_tol: float = 1e-10
    gaussian_rel_tol: float = 0.01
    control_sigma: float = 0.5
    # no-signalling
    coupling_control: float = 0.5
    # sweeps
    sweep_axis: str = "sigma"
    sweep_values: list | None = None
    sweep_slope_tol: float = 0.1
    sweep_route: str = "montecarlo"
    sweep_max_steps: int = 5000
    # measurement
    meas_amplitudes: list = field(default_factory=lambda: [math.sqrt(0.3), math.sqrt(0.7)])
    meas_eigenvalues: list = field(default_factory=lambda: [-1.0, 1.0])
    meas_coupling: float = 1.0
    pointer_width: float = 0.5
    pointer_points: int = 4096
    pointer_length: float = 200.0
    t_measure: float = 5.0
    n_trials: int = 10000
    n_seeds: int = 20
    # grid dynamics
    grid_points: int = 1024
    grid_length: float = 15.9
    osc_omega: float = 1.0
    q0: float = 1.0
    steps_per_period: int = 2000
    periods: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.system not in SYSTEMS:
            raise ConfigError(f"system must be one of {SYSTEMS}, got {self.system!r}")
        if self.mode not in (m.value for m in Mode):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.system == "matrix":
            if not self.matrix_file:
                raise ConfigError("system 'matrix' needs matrix_file")
            if not os.path.exists(self.matrix_file):
                raise ConfigError(f"matrix_file {self.matrix_file!r} does not exist")
        if self.mode == "SCALED_KINETIC" and self.system != "harmonic":
            raise ConfigError("SCALED_KINETIC needs the kinetic/potential split of system 'harmonic'")
        if self.levels < 1 or self.random_dim < 1:
            raise ConfigError("levels and random_dim must be >= 1")
        if self.n_samples < 1 or self.workers < 1 or self.chunk_size < 1:
            raise ConfigError("n_samples, workers and chunk_size must be >= 1")
        if self.seed is not None and (int(self.seed) != self.seed or self.seed < 0):
            raise ConfigError("seed must be a non-negative integer")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep_axis must be one of {SWEEP_AXES}")
        if self.sweep_route not in ROUTES:
            raise ConfigError(f"sweep_route must be one of {ROUTES}")
        if self.sweep_values is not None and len(self.sweep_values) < 3:
            raise ConfigError("sweep_values needs at least 3 entries")
        if len(self.element) != 2:
            raise ConfigError("element must be a pair [r, s]")
        try:
            self.params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # --- serialisation -------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names - {"schema_version"})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {data['schema_version']}")
        kw = {k: v for k, v in data.items() if k != "schema_version"}
        try:
            return cls(**{k: _coerce(cls, k, v) for k, v in kw.items()})
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path!r} not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        d = self.to_dict()
        d.update(overrides)
        return RunConfig.from_dict(d)

    # --- builders ------------------------------------------------------
    def params(self) -> LambdaParams:
        return LambdaParams(mu=self.mu, sigma=self.sigma, tau_lambda=self.tau_lambda, ar1=self.ar1)

    @property
    def hbar(self) -> float:
        return math.exp(self.mu)

    def hamiltonian_spec(self) -> LambdaHamiltonianSpec:
        hbar = self.hbar
        if self.system == "qubit":
            h = HermitianOperator(np.diag([0.0, hbar * self.omega]))
        elif self.system == "ladder":
            h = HermitianOperator(np.diag(hbar * self.omega * np.arange(self.levels, dtype=float)))
        elif self.system == "harmonic":
            kin, pot = harmonic_split(self.levels, self.mass, self.omega, hbar)
            return LambdaHamiltonianSpec(kin + pot, Mode(self.mode), kin, pot, hbar)
        elif self.system == "random":
            h = random_hermitian(self.random_dim, np.random.default_rng(self.random_seed))
        else:
            h = HermitianOperator(load_matrix(self.matrix_file))
        return LambdaHamiltonianSpec(h, Mode(self.mode), hbar=hbar)

    def initial(self, spec: LambdaHamiltonianSpec) -> StateVector:
        return build_state(self.initial_state, spec)


def _coerce(cls, key, value):
    f = {f.name: f for f in dataclasses.fields(cls)}[key]
    default = f.default if f.default is not dataclasses.MISSING else None
    if value is None:
        return None
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if key == "seed":
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"seed must be an integer, got {value!r}")
    return value


def harmonic_split(levels: int, mass: float, omega: float, hbar: float = 1.0):
    """Kinetic and potential parts of a truncated oscillator in the number basis."""
    a = np.diag(np.sqrt(np.arange(1, levels, dtype=float)), 1)
    ad = a.T
    q = math.sqrt(hbar / (2 * mass * omega)) * (a + ad)
    p = 1j * math.sqrt(hbar * mass * omega / 2) * (ad - a)
    kin = p @ p / (2 * mass)
    pot = 0.5 * mass * omega ** 2 * q @ q
    kin = 0.5 * (kin + kin.conj().T)
    return HermitianOperator(kin), HermitianOperator(pot.astype(complex))


def load_matrix(path) -> np.ndarray:
    """Read a Hamiltonian from ``.npy`` or JSON (``[[re, ...]]`` or ``{"re": ..., "im": ...}``)."""
    if str(path).endswith(".npy"):
        return np.load(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        return np.asarray(data["re"], dtype=float) + 1j * np.asarray(data.get("im", 0.0), dtype=float)
    return np.asarray(data, dtype=complex)


def build_state(desc, spec: LambdaHamiltonianSpec) -> StateVector:
    """Initial state from a config value.

    Strings: ``uniform`` (equal weights in the given basis), ``energy_uniform``
    (equal weights over energy eigenvectors), ``basis:K``, ``eigen:K``.
    Lists: real amplitudes, or ``[re, im]`` pairs; normalised on load.
    """
    d = spec.dim
    if isinstance(desc, str):
        if desc == "uniform":
            return StateVector.normalized(np.ones(d))
        if desc == "energy_uniform":
            dec = spectral_decompose(spec.base)
            return StateVector.normalized(dec.eigenvectors @ np.ones(d))
        kind, _, idx = desc.partition(":")
        if kind in ("basis", "eigen") and idx.isdigit() and int(idx) < d:
            if kind == "basis":
                return StateVector.basis(d, int(idx))
            dec = spectral_decompose(spec.base)
            return StateVector(dec.eigenvectors[:, int(idx)])
        raise ConfigError(f"cannot interpret initial_state {desc!r}")
    if isinstance(desc, list) and len(desc) == d:
        try:
            amps = np.array([complex(a[0], a[1]) if isinstance(a, list) else complex(a) for a in desc])
        except (TypeError, IndexError) as exc:
            raise ConfigError(f"bad amplitude list: {exc}") from exc
        if not np.linalg.norm(amps) > 0:
            raise ConfigError("initial_state amplitudes are all zero")
        return StateVector.normalized(amps)
    raise ConfigError(f"initial_state must be a string or a list of {d} amplitudes")


def parse_override(text: str):
    """``key=value`` with the value parsed as JSON when possible."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
