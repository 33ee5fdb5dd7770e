"""Experiment drivers and run-directory persistence.

Each ``run_*`` function takes a :class:`~chaotic_planck.config.RunConfig` and
returns a :class:`ComparisonReport`: named pass/fail criteria, scalar metrics
and tabular series.  :func:`persist` writes ``config.json``,
``series_<name>.csv`` and ``report.json`` into a run directory.  Reports carry
no timestamps, host names or worker counts, so the same config and seed give
byte-identical ``report.json`` files.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .closed_form import (
    approximation_discrepancy,
    closed_form_matrix,
    decay_factor_quadrature,
    decay_rate,
    frequency_matrix,
    gaussian_decay_factor,
)
from .config import SCHEMA_VERSION, RunConfig, build_state
from .errors import ConfigError, FitFailure, ValidationError
from .hilbert import (
    DensityMatrix,
    HermitianOperator,
    StateVector,
    partial_trace_matrix,
    pure_density,
    spectral_decompose,
    trace_distance_matrix,
)
from .lambda_process import LambdaParams
from .lindblad import LindbladRun, alpha_from_params, default_dt, dt_for_accuracy, integrate
from .montecarlo import average_density, fit_decay_rate, steps_for
from .position_space import (
    GridState,
    MeasurementModel,
    coherent_state,
    continuity_residual,
    ehrenfest_check,
    evolve_measurement,
    gaussian_packet,
    make_grid,
    propagate,
    sample_outcomes,
)
from .propagator import LambdaHamiltonianSpec, exact_unitary

POSITIVITY_TOL = 1e-9
MAX_SERIES_ROWS = 2000
SWEEP_DEFAULTS = {
    "sigma": [0.05, 0.1, 0.2],
    "tau_lambda": [0.1, 0.2, 0.4],
    "omega": [2.5, 5.0, 10.0],
}
SWEEP_EXPECTED_SLOPE = {"sigma": 2.0, "tau_lambda": 1.0, "omega": 2.0}


# --- report types ---------------------------------------------------------

@dataclass(frozen=True)
class Criterion:
    """``value <op> threshold``; ``op`` is one of ``<=``, ``>=``, ``>``, ``in``."""

    name: str
    value: float
    threshold: float | tuple
    op: str = "<="

    @property
    def passed(self) -> bool:
        v = self.value
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return False
        if self.op == "<=":
            return v <= self.threshold
        if self.op == ">=":
            return v >= self.threshold
        if self.op == ">":
            return v > self.threshold
        if self.op == "in":
            lo, hi = self.threshold
            return lo <= v <= hi
        raise ValueError(f"unknown comparison {self.op!r}")

    def line(self) -> str:
        thr = self.threshold
        thr = f"[{thr[0]:.6g}, {thr[1]:.6g}]" if isinstance(thr, tuple) else f"{thr:.6g}"
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.6g} {self.op} {thr}"

    def to_json(self) -> dict:
        thr = list(self.threshold) if isinstance(self.threshold, tuple) else self.threshold
        return {"name": self.name, "value": self.value, "op": self.op, "threshold": thr,
                "passed": bool(self.passed)}


@dataclass
class Series:
    """Named columns of equal length; complex columns become ``_re``/``_im`` pairs."""

    columns: dict

    def header(self) -> list:
        head = []
        for name, col in self.columns.items():
            if np.iscomplexobj(col):
                head += [f"{name}_re", f"{name}_im"]
            else:
                head.append(name)
        return head

    def to_csv(self) -> str:
        cols = []
        for col in self.columns.values():
            col = np.asarray(col)
            if np.iscomplexobj(col):
                cols += [col.real, col.imag]
            else:
                cols.append(col)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


@dataclass
class ComparisonReport:
    experiment: str
    criteria: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def criterion(self, name: str) -> Criterion:
        for c in self.criteria:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return _jsonable({
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "seed": self.seed,
            "passed": self.passed,
            "criteria": [c.to_json() for c in self.criteria],
            "metrics": self.metrics,
            "series": sorted(f"series_{k}.csv" for k in self.series),
        })

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def lines(self) -> list:
        return [c.line() for c in self.criteria]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, complex):
        return {"re": _jsonable(obj.real), "im": _jsonable(obj.imag)}
    return obj


def persist(report: ComparisonReport, cfg: RunConfig, out_dir) -> str:
    """Write the run directory.  Files are staged next to ``out_dir`` and moved
    in only once all of them have been written."""
    out_dir = os.path.abspath(out_dir)
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=".stage-", dir=parent)
    try:
        files = {"config.json": cfg.dumps(), "report.json": report.dumps()}
        for name, s in report.series.items():
            files[f"series_{name}.csv"] = s.to_csv()
        for name, text in files.items():
            with open(os.path.join(stage, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        if not os.path.exists(out_dir):
            os.rename(stage, out_dir)
            return out_dir
        for name in files:
            os.replace(os.path.join(stage, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return out_dir


# --- helpers ---------------------------------------------------------------

def derive_seed(seed: int, *keys: int) -> int:
    """Independent 64-bit seed for a sub-task, fixed by ``(seed, keys)``."""
    s = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    a, b = s.generate_state(2, np.uint32)
    return (int(b) << 32) | int(a)


def _require_seed(cfg: RunConfig, what: str) -> int:
    if cfg.seed is None:
        raise ConfigError(f"{what} is stochastic and needs an explicit seed")
    return int(cfg.seed)


def lindblad_dt(cfg: RunConfig, h: HermitianOperator, alpha: float, p: LambdaParams,
                t_final: float) -> float:
    if cfg.dt_int is not None:
        return cfg.dt_int
    return min(default_dt(p, h), dt_for_accuracy(h, alpha, t_final, p.hbar))


def _lindblad_on_grid(rho0: np.ndarray, h: HermitianOperator, alpha: float, tau: float,
                      n_records: int, dt: float, hbar: float):
    """Every-step run plus the stride that lands on multiples of ``tau``."""
    if dt > tau / 10 * (1 + 1e-12):
        raise ValidationError(f"dt_int={dt} exceeds tau_lambda/10")
    sub = max(1, math.ceil(tau / dt - 1e-9))
    run = integrate(DensityMatrix(rho0), h, alpha, n_records * tau, tau / sub, hbar)
    return run, sub


def _conservation(run: LindbladRun, h: HermitianOperator, dec) -> dict:
    hn = h.norm()
    e = run.energies()
    s = run.entropies()
    v0 = dec.eigenvectors[:, :1]
    ops = {"H^2": h.elements @ h.elements, "ground_projector": v0 @ v0.conj().T}
    drifts = {}
    for name, o in ops.items():
        vals = np.einsum("ij,tji->t", o, run.rhos).real
        scale = max(np.linalg.norm(o, 2), 1e-300)
        drifts[name] = float(np.max(np.abs(vals - vals[0])) / scale)
    return {
        "energy_drift_rel": float(np.max(np.abs(e - e[0])) / hn) if hn > 0 else 0.0,
        "entropy_min_increment": float(np.min(np.diff(s))) if s.size > 1 else 0.0,
        "entropy_initial": float(s[0]),
        "entropy_final": float(s[-1]),
        "commuting_drift": drifts,
        "trace_drift": float(np.max(np.abs(run.traces() - 1.0))),
        "min_eigenvalue": float(np.min(run.min_eigenvalues())),
        "symmetrization": float(run.symmetrization),
        "n_steps": int(run.times.size - 1),
        "dt": float(run.times[1] - run.times[0]) if run.times.size > 1 else 0.0,
    }, s


def _conservation_criteria(cons: dict, tol: float, prefix: str = "") -> list:
    return [
        Criterion(prefix + "energy_drift", cons["energy_drift_rel"], tol),
        Criterion(prefix + "entropy_monotone", cons["entropy_min_increment"], -tol, ">="),
        Criterion(prefix + "commuting_observable_drift", max(cons["commuting_drift"].values()), tol),
    ]


def _pairs(d: int, diagonal: bool = False) -> list:
    return [(r, s) for r in range(d) for s in range(r if diagonal else r + 1, d)]


def _stride(n_rows: int) -> int:
    return max(1, math.ceil(n_rows / MAX_SERIES_ROWS))


# --- cross-validation ---------------------------------------------------

def _mc_vs_cf(est, cf_e, pairs):
    """Magnitude comparison per element: final-time z and relative gap, and max z over time."""
    rows = []
    for r, s in pairs:
        mag, se = est.magnitude(r, s)
        ref = np.abs(cf_e[:, r, s])
        dev = np.abs(mag - ref)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, dev / se, np.where(dev > 0, np.inf, 0.0))
        rel = float(dev[-1] / ref[-1]) if ref[-1] > 1e-12 else None
        rows.append({
            "element": [r, s], "mc_abs": float(mag[-1]), "mc_stderr": float(se[-1]),
            "closed_form_abs": float(ref[-1]), "z_final": float(z[-1]), "rel_final": rel,
            "z_max": float(np.max(z[1:])) if z.size > 1 else 0.0,
        })
    return rows


def run_cross_validation(cfg: RunConfig) -> ComparisonReport:
    """Monte Carlo, closed form and Lindblad routes on one system, plus a unitary reference."""
    spec = cfg.hamiltonian_spec()
    p = cfg.params()
    psi0 = cfg.initial(spec)
    if p.sigma > 0:
        _require_seed(cfg, "crossval with sigma > 0")
    seed = 0 if cfg.seed is None else int(cfg.seed)
    h = spec.base
    dec = spectral_decompose(h)
    v, energies = dec.eigenvectors, dec.energies
    tau = p.tau_lambda
    n = steps_for(cfg.t_final, tau)
    times = tau * np.arange(n + 1)
    d = spec.dim
    pairs = _pairs(d)

    est = average_density(spec, p, psi0, cfg.t_final, cfg.n_samples, seed,
                          cfg.workers, cfg.chunk_size)
    rho0 = pure_density(psi0).elements
    rho0_e = v.conj().T @ rho0 @ v
    cf_e = np.array([closed_form_matrix(rho0_e, energies, p, t) for t in times])

    alpha = alpha_from_params(p)
    dt = lindblad_dt(cfg, h, alpha, p, cfg.t_final)
    run, sub = _lindblad_on_grid(rho0, h, alpha, tau, n, dt, p.hbar)
    lind = run.rhos[::sub]
    lind_e = np.einsum("ia,tij,jb->tab", v.conj(), lind, v)
    cons, entropy = _conservation(run, h, dec)

    metrics = {
        "system": cfg.system, "dim": d, "mode": spec.mode.value, "n_steps": n,
        "n_samples": cfg.n_samples, "alpha": alpha, "lindblad": cons,
        "lindblad_vs_closed_form_abs": float(np.max(np.abs(lind_e - cf_e))),
    }
    criteria = []
    if p.sigma > 0:
        rows = _mc_vs_cf(est, cf_e, pairs)
        metrics["mc_vs_closed_form"] = rows
        rels = [r["rel_final"] for r in rows if r["rel_final"] is not None]
        criteria += [
            Criterion("mc_vs_closed_form_stderr_units", max((r["z_final"] for r in rows), default=0.0),
                      cfg.mc_stderr_factor),
            Criterion("mc_vs_closed_form_relative", max(rels, default=0.0), cfg.mc_rel_tol),
        ]
    else:
        u_states = np.array([exact_unitary(h, t, p.hbar) @ psi0.amplitudes for t in times])
        routes = {
            "unitary": np.einsum("ti,tj->tij", u_states, u_states.conj()),
            "montecarlo": np.einsum("ia,tab,jb->tij", v, est.rho_tilde, v.conj()),
            "closed_form": np.einsum("ia,tab,jb->tij", v, cf_e, v.conj()),
            "lindblad": lind,
        }
        names = list(routes)
        dev = {f"{a}~{b}": float(np.max(np.abs(routes[a] - routes[b])))
               for i, a in enumerate(names) for b in names[i + 1:]}
        metrics["quantum_limit_pairwise"] = dev
        criteria.append(Criterion("quantum_limit_pairwise_max", max(dev.values()), cfg.route_abs_tol))
    criteria.append(Criterion("lindblad_vs_closed_form", metrics["lindblad_vs_closed_form_abs"],
                              cfg.route_abs_tol))
    criteria += _conservation_criteria(cons, cfg.conservation_tol)

    if cfg.control_sigma > 0 and cfg.seed is not None and pairs:
        pc = LambdaParams(mu=p.mu, sigma=cfg.control_sigma, tau_lambda=tau, ar1=p.ar1)
        est_c = average_density(spec, pc, psi0, cfg.t_final, cfg.n_samples,
                                derive_seed(seed, 1), cfg.workers, cfg.chunk_size)
        cf_c = np.array([closed_form_matrix(rho0_e, energies, pc, t) for t in times])
        rows_c = _mc_vs_cf(est_c, cf_c, pairs)
        if max(abs(rho0_e[r, s]) for r, s in pairs) > 1e-12:
            z_c = max(r["z_max"] for r in rows_c)
            metrics["negative_control"] = {"sigma": cfg.control_sigma, "z_max": z_c}
            criteria.append(Criterion("negative_control_detected", z_c, cfg.mc_stderr_factor, ">"))

    cols = {"t": times}
    for r, s in _pairs(d, diagonal=True)[:64]:
        cols[f"mc_{r}{s}"] = est.rho_tilde[:, r, s]
        cols[f"cf_{r}{s}"] = cf_e[:, r, s]
        cols[f"lindblad_{r}{s}"] = lind_e[:, r, s]
    series = {"routes": Series(cols)}
    k = _stride(run.times.size)
    series["lindblad"] = Series({
        "t": run.times[::k], "energy": run.energies()[::k], "entropy": entropy[::k],
        "trace": run.traces()[::k].real, "min_eigenvalue": run.min_eigenvalues()[::k],
    })
    return ComparisonReport("crossval", criteria, metrics, series, cfg.seed)


# --- single routes ---------------------------------------------------------

def run_decay(cfg: RunConfig) -> ComparisonReport:
    """Gaussian decay factor against the quadrature oracle for one ``omega``."""
    p = cfg.params()
    omega = cfg.omega
    g = gaussian_decay_factor(omega, p)
    metrics = {"omega": omega, "sigma": p.sigma, "tau_lambda": p.tau_lambda,
               "gaussian_factor": g, "rate": decay_rate(omega, p),
               "in_gaussian_regime": bool(p.sigma <= 0.1 and abs(omega) * p.tau_lambda <= 2)}
    if p.sigma > 0:
        q = decay_factor_quadrature(omega, p, "exact")
        ql = decay_factor_quadrature(omega, p, "linearized")
        disc = approximation_discrepancy(omega, p)
        metrics.update({"quadrature_exact": q, "quadrature_linearized": ql,
                        "quadrature_abs": abs(q), "discrepancy_rel": disc})
    else:
        disc = 0.0
        metrics.update({"quadrature_abs": 1.0, "discrepancy_rel": 0.0})
    crit = Criterion("gaussian_vs_quadrature", disc, cfg.gaussian_rel_tol)
    metrics["flagged_out_of_tolerance"] = not crit.passed
    tau = p.tau_lambda
    n = max(1, int(round(cfg.t_final / tau)))
    t = tau * np.arange(n + 1)
    z = 0.5 * np.exp(-1j * omega * t - metrics["rate"] * t)
    series = {"decay": Series({"t": t, "abs": np.abs(z), "phase": np.angle(z)})}
    return ComparisonReport("decay", [crit], metrics, series, cfg.seed)


def run_lindblad(cfg: RunConfig) -> ComparisonReport:
    spec = cfg.hamiltonian_spec()
    p = cfg.params()
    psi0 = cfg.initial(spec)
    h = spec.base
    dec = spectral_decompose(h)
    alpha = alpha_from_params(p)
    dt = lindblad_dt(cfg, h, alpha, p, cfg.t_final)
    rho0 = pure_density(psi0)
    if dt > p.tau_lambda / 10 * (1 + 1e-12):
        raise ValidationError(f"dt_int={dt} exceeds tau_lambda/10")
    run = integrate(rho0, h, alpha, cfg.t_final, dt, p.hbar)
    cons, entropy = _conservation(run, h, dec)
    v = dec.eigenvectors
    rho0_e = dec.to_energy_basis(rho0.elements)
    k = _stride(run.times.size)
    t = run.times[::k]
    lind_e = np.einsum("ia,tij,jb->tab", v.conj(), run.rhos[::k], v)
    cf_e = np.array([closed_form_matrix(rho0_e, dec.energies, p, tk) for tk in t])
    dev = float(np.max(np.abs(lind_e - cf_e)))
    criteria = _conservation_criteria(cons, cfg.conservation_tol) + [
        Criterion("trace_drift", cons["trace_drift"], cfg.conservation_tol),
        Criterion("positivity", cons["min_eigenvalue"], -POSITIVITY_TOL, ">="),
        Criterion("lindblad_vs_closed_form", dev, cfg.route_abs_tol),
    ]
    metrics = {"system": cfg.system, "dim": spec.dim, "alpha": alpha, "lindblad": cons,
               "lindblad_vs_closed_form_abs": dev}
    cols = {"t": t}
    for r, s in _pairs(spec.dim, diagonal=True)[:64]:
        cols[f"rho_{r}{s}"] = run.rhos[::k, r, s]
    cols.update({"energy": run.energies()[::k], "entropy": entropy[::k],
                 "min_eigenvalue": run.min_eigenvalues()[::k]})
    return ComparisonReport("lindblad", criteria, metrics, {"lindblad": Series(cols)}, cfg.seed)


def run_montecarlo(cfg: RunConfig) -> ComparisonReport:
    seed = _require_seed(cfg, "montecarlo")
    spec = cfg.hamiltonian_spec()
    p = cfg.params()
    psi0 = cfg.initial(spec)
    est = average_density(spec, p, psi0, cfg.t_final, cfg.n_samples, seed,
                          cfg.workers, cfg.chunk_size)
    r, s = (int(i) for i in cfg.element)
    mag, se = est.magnitude(r, s)
    c0 = est.rho_tilde[0]
    cf = np.array([closed_form_matrix(c0, est.energies, p, t) for t in est.times])
    mins = np.array([np.linalg.eigvalsh(m)[0] for m in est.rho_tilde])
    traces = np.einsum("tii->t", est.rho_tilde).real
    metrics = {
        "system": cfg.system, "dim": spec.dim, "mode": spec.mode.value,
        "n_samples": cfg.n_samples, "n_steps": int(est.times.size - 1),
        "element": [r, s], "abs_final": float(mag[-1]), "stderr_final": float(se[-1]),
        "closed_form_abs_final": float(abs(cf[-1, r, s])),
    }
    criteria = [
        Criterion("positivity", float(mins.min()), -POSITIVITY_TOL, ">="),
        Criterion("trace", float(np.max(np.abs(traces - 1.0))), 1e-12),
    ]
    cols = {"t": est.times}
    for a, b in _pairs(spec.dim, diagonal=True)[:64]:
        cols[f"rho_{a}{b}"] = est.rho_tilde[:, a, b]
        cols[f"stderr_{a}{b}_re"] = est.stderr_re[:, a, b]
        cols[f"stderr_{a}{b}_im"] = est.stderr_im[:, a, b]
    return ComparisonReport("montecarlo", criteria, metrics, {"montecarlo": Series(cols)}, seed)


# --- no-signalling -------------------------------------------------------

_H2_VARIANTS = (
    np.array([[0.0, 0.0], [0.0, 2.0]]),
    np.array([[0.5, 0.8], [0.8, -0.5]]),
    np.array([[1.0, 0.3 - 0.6j], [0.3 + 0.6j, -0.2]]),
)
_SX = np.array([[0.0, 1.0], [1.0, 0.0]])
_SY = np.array([[0.0, -1j], [1j, 0.0]])


def _rho2_variants():
    plus = np.full((2, 2), 0.5)
    mixed = np.array([[0.3, 0.1 - 0.2j], [0.1 + 0.2j, 0.7]])
    return (np.diag([1.0, 0.0]), plus, mixed)


def _reduced_series(rho0, h, alpha, tau, n, dt, hbar):
    run, sub = _lindblad_on_grid(rho0, h, alpha, tau, n, dt, hbar)
    rhos = run.rhos[::sub]
    red = np.array([partial_trace_matrix(r, (2, 2), keep=1) for r in rhos])
    return red, run


def _spread(reduced: list) -> float:
    out = 0.0
    for i in range(len(reduced)):
        for j in range(i + 1, len(reduced)):
            for a, b in zip(reduced[i], reduced[j]):
                out = max(out, trace_distance_matrix(a, b))
    return out


def run_no_signaling(cfg: RunConfig) -> ComparisonReport:
    """Reduced dynamics of qubit 1 under variations of qubit 2's Hamiltonian and state."""
    p = cfg.params()
    hbar = p.hbar
    tau = p.tau_lambda
    n = steps_for(cfg.t_final, tau)
    alpha = alpha_from_params(p)
    h1 = np.diag([0.0, hbar * cfg.omega])
    spec1 = LambdaHamiltonianSpec(HermitianOperator(h1), hbar=hbar)
    rho1 = pure_density(build_state(cfg.initial_state, spec1)).elements
    eye = np.eye(2)
    h2s = [hbar * m for m in _H2_VARIANTS]
    h_int = cfg.coupling_control * hbar * np.kron(_SX, _SX)

    def joint(h2, interacting=False):
        m = np.kron(h1, eye) + np.kron(eye, h2) + (h_int if interacting else 0.0)
        return HermitianOperator(m)

    hs = [joint(h2) for h2 in h2s] + [joint(h2, True) for h2 in h2s]
    dt = cfg.dt_int if cfg.dt_int is not None else min(
        min(default_dt(p, h), dt_for_accuracy(h, alpha, cfg.t_final, hbar)) for h in hs)

    # local reference: qubit 1 alone
    h1_op = HermitianOperator(h1)
    run1, sub1 = _lindblad_on_grid(rho1, h1_op, alpha, tau, n, dt, hbar)
    local = run1.rhos[::sub1]

    product, control, worst_cons = [], [], {}
    for interacting, bucket in ((False, product), (True, control)):
        for h2 in h2s:
            h = joint(h2, interacting)
            for rho2 in _rho2_variants():
                red, run = _reduced_series(np.kron(rho1, rho2), h, alpha, tau, n, dt, hbar)
                bucket.append(red)
                if not interacting:
                    cons, _ = _conservation(run, h, spectral_decompose(h))
                    for key in ("energy_drift_rel", "trace_drift"):
                        worst_cons[key] = max(worst_cons.get(key, 0.0), cons[key])
                    worst_cons["entropy_min_increment"] = min(
                        worst_cons.get("entropy_min_increment", math.inf), cons["entropy_min_increment"])

    theta = 0.6
    psi = np.zeros(4, dtype=complex)
    psi[0], psi[3] = math.cos(theta), math.sin(theta)
    had = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2)
    psi = np.kron(had, eye) @ psi
    gens = (np.zeros((2, 2)), 0.7 * _SX, 1.1 * _SY)
    entangled = []
    for h2 in h2s:
        for g in gens:
            u2 = exact_unitary(HermitianOperator(g), 1.0)
            phi = np.kron(eye, u2) @ psi
            red, _ = _reduced_series(np.outer(phi, phi.conj()), joint(h2), alpha, tau, n, dt, hbar)
            entangled.append(red)

    s_prod = _spread(product)
    s_ent = _spread(entangled)
    s_ctrl = _spread(control)
    local_dev = max(float(np.max(np.abs(r - local))) for r in product)
    metrics = {
        "n_variations_product": len(product), "n_variations_entangled": len(entangled),
        "spread_product": s_prod, "spread_entangled": s_ent, "spread_interacting": s_ctrl,
        "product_vs_local_abs": local_dev, "coupling_control": cfg.coupling_control,
        "dt": tau / sub1, "lindblad": worst_cons,
    }
    criteria = [
        Criterion("no_signaling_product", s_prod, cfg.route_abs_tol),
        Criterion("no_signaling_entangled", s_ent, cfg.route_abs_tol),
        Criterion("interacting_control_detected", s_ctrl, 1e-3, ">"),
        Criterion("energy_drift", worst_cons["energy_drift_rel"], cfg.conservation_tol),
        Criterion("entropy_monotone", worst_cons["entropy_min_increment"], -cfg.conservation_tol, ">="),
    ]
    t = tau * np.arange(n + 1)
    cols = {"t": t, "rho1_01_local": local[:, 0, 1]}
    for i, red in enumerate(product):
        cols[f"rho1_01_product{i}"] = red[:, 0, 1]
    for i, red in enumerate(control):
        cols[f"rho1_01_interacting{i}"] = red[:, 0, 1]
    return ComparisonReport("nosignal", criteria, metrics, {"reduced": Series(cols)}, cfg.seed)


# --- measurement ---------------------------------------------------------

def measurement_model(cfg: RunConfig) -> MeasurementModel:
    x, dx, x_min = make_grid(cfg.pointer_points, cfg.pointer_length)
    chi = GridState(gaussian_packet(x, dx, 0.0, cfg.pointer_width), dx, np.zeros_like(x), x_min)
    amps = np.array([complex(a[0], a[1]) if isinstance(a, list) else complex(a)
                     for a in cfg.meas_amplitudes])
    return MeasurementModel(amps, np.asarray(cfg.meas_eigenvalues, dtype=float),
                            cfg.meas_coupling, chi)


def run_measurement(cfg: RunConfig) -> ComparisonReport:
    """Pointer readout statistics over ``n_seeds`` consecutive seeds."""
    from scipy import stats

    seed = _require_seed(cfg, "measure")
    model = measurement_model(cfg)
    st = evolve_measurement(model, cfg.t_measure)
    born = model.weights
    binom = np.sqrt(born * (1 - born) / cfg.n_trials)
    per_seed, chis, dof = [], [], 0
    for i in range(cfg.n_seeds):
        o = sample_outcomes(model, cfg.t_measure, cfg.n_trials, np.random.default_rng(seed + i))
        chi, pv = o.chi_square()
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(binom > 0, np.abs(o.frequencies - born) / binom,
                         np.where(o.frequencies != born, np.inf, 0.0))
        per_seed.append({"seed": seed + i, "counts": o.counts.tolist(),
                         "max_z": float(z.max()), "chi_square": chi, "p_value": pv})
        chis.append(chi)
        dof = int((born > 0).sum()) - 1
    pooled = float(np.sum(chis))
    pooled_dof = dof * cfg.n_seeds
    pooled_p = float(stats.chi2.sf(pooled, pooled_dof)) if pooled_dof > 0 else 1.0
    first = per_seed[0]
    metrics = {
        "born_probabilities": born, "binomial_stderr": binom, "t": cfg.t_measure,
        "branch_centers": st.centers, "max_overlap": st.max_overlap,
        "first_seed": first, "per_seed": per_seed,
        "pooled_chi_square": pooled, "pooled_dof": pooled_dof, "pooled_p_value": pooled_p,
        "seeds_rejected_at_1pct": int(sum(r["p_value"] < 0.01 for r in per_seed)),
        "seeds_outside_3_stderr": int(sum(r["max_z"] > 3 for r in per_seed)),
        "histogram": {"counts": first["counts"], "n_trials": cfg.n_trials,
                      "frequencies": [c / cfg.n_trials for c in first["counts"]]},
    }
    criteria = [
        Criterion("born_within_3_stderr", first["max_z"], 3.0),
        Criterion("born_chi_square_pooled_p", pooled_p, 0.01, ">="),
        Criterion("pointer_overlap", st.max_overlap, 1e-3),
    ]
    k = _stride(st.x.size)
    series = {"pointer": Series({"q": st.x[::k], "density": st.pointer_density()[::k]})}
    return ComparisonReport("measure", criteria, metrics, series, seed)


# --- grid dynamics -------------------------------------------------------

def _oscillator_run(cfg: RunConfig, steps_per_period: int):
    lam = cfg.hbar
    state = coherent_state(cfg.grid_points, cfg.grid_length, cfg.mass, cfg.osc_omega, cfg.q0, lam=lam)
    period = 2 * math.pi / cfg.osc_omega
    dt = period / steps_per_period
    n = int(round(cfg.periods * steps_per_period))
    return propagate(state, dt, n, lam, cfg.mass)


def run_ehrenfest(cfg: RunConfig) -> ComparisonReport:
    """Harmonic-trap coherent state: Ehrenfest and continuity residuals with step refinement."""
    coarse = _oscillator_run(cfg, cfg.steps_per_period)
    fine = _oscillator_run(cfg, 2 * cfg.steps_per_period)
    e_c, e_f = ehrenfest_check(coarse, cfg.mass), ehrenfest_check(fine, cfg.mass)
    c_c, c_f = continuity_residual(coarse, cfg.mass), continuity_residual(fine, cfg.mass)
    q = coarse.mean_positions()
    q_ref = cfg.q0 * np.cos(cfg.osc_omega * coarse.times)
    ehr_order = math.log2(e_c.abs_residual / e_f.abs_residual) if e_f.abs_residual > 0 else float("inf")
    cont_order = math.log2(c_c.raw / c_f.raw) if c_f.raw > 0 else float("inf")
    metrics = {
        "dt": float(coarse.times[1] - coarse.times[0]), "n_steps": int(coarse.times.size - 1),
        "ehrenfest_rel": e_c.rel_residual, "ehrenfest_rel_refined": e_f.rel_residual,
        "continuity_raw": c_c.raw, "continuity_raw_refined": c_f.raw,
        "continuity_normalized": c_c.normalized, "continuity_normalized_refined": c_f.normalized,
        "ehrenfest_order": ehr_order, "continuity_order": cont_order,
        "mean_position_rel_error": float(np.max(np.abs(q - q_ref)) / abs(cfg.q0)) if cfg.q0 else 0.0,
        "norm_drift": float(np.max(np.abs(coarse.norms() - 1.0))),
    }
    band = (1.8, 2.2)
    criteria = [
        Criterion("ehrenfest_residual", e_c.rel_residual, 1e-3),
        Criterion("continuity_residual", c_c.normalized, 1e-3),
        Criterion("ehrenfest_order", ehr_order, band, "in"),
        Criterion("continuity_order", cont_order, band, "in"),
    ]
    k = _stride(coarse.times.size)
    series = {"trace": Series({
        "t": coarse.times[::k], "mean_q": q[::k], "mean_p": coarse.mean_momenta()[::k],
        "norm": coarse.norms()[::k],
    })}
    return ComparisonReport("ehrenfest", criteria, metrics, series, cfg.seed)


# --- sweeps --------------------------------------------------------------

@dataclass(frozen=True)
class _SweepPoint:
    value: float
    spec: LambdaHamiltonianSpec
    params: LambdaParams
    psi0: StateVector
    elements: tuple
    omegas: tuple
    n_steps: int
    seed: int


def _sweep_points(cfg: RunConfig, values, seed: int) -> list:
    hbar = cfg.hbar
    base = cfg.params()
    cap = cfg.sweep_max_steps

    def steps(rate, tau):
        return int(min(cap, max(10, math.ceil(math.log(20.0) / (rate * tau)))))

    if cfg.sweep_axis == "omega":
        w = np.asarray(values, dtype=float)
        if np.any(w <= 0) or np.unique(w).size != w.size:
            raise ValidationError("omega sweep values must be distinct and positive")
        h = HermitianOperator(np.diag(np.concatenate([[0.0], hbar * w])))
        spec = LambdaHamiltonianSpec(h, hbar=hbar)
        psi0 = StateVector.normalized(np.ones(w.size + 1))
        n = steps(decay_rate(float(w.min()), base), base.tau_lambda)
        elements = tuple((0, j + 1) for j in range(w.size))
        return [_SweepPoint(float(w.min()), spec, base, psi0, elements, tuple(-w), n, seed)]
    points = []
    for i, val in enumerate(values):
        kw = {"mu": base.mu, "sigma": base.sigma, "tau_lambda": base.tau_lambda, "ar1": base.ar1}
        kw[cfg.sweep_axis] = float(val)
        p = LambdaParams(**kw)
        if p.sigma <= 0:
            raise ValidationError("sweep needs sigma > 0 at every point")
        h = HermitianOperator(np.diag([0.0, hbar * cfg.omega]))
        spec = LambdaHamiltonianSpec(h, hbar=hbar)
        psi0 = StateVector.normalized(np.ones(2))
        n = steps(decay_rate(cfg.omega, p), p.tau_lambda)
        points.append(_SweepPoint(float(val), spec, p, psi0, ((0, 1),), (-cfg.omega,), n,
                                  derive_seed(seed, i)))
    return points


def _sweep_magnitudes(pt: _SweepPoint, route: str, chunk: int, cfg: RunConfig):
    p = pt.params
    tau = p.tau_lambda
    times = tau * np.arange(pt.n_steps + 1)
    rho0 = pure_density(pt.psi0).elements
    energies = np.real(np.diag(pt.spec.base.elements))
    if route == "montecarlo":
        est = average_density(pt.spec, p, pt.psi0, pt.n_steps * tau, cfg.n_samples, pt.seed, 1, chunk)
        return times, [est.magnitude(r, s)[0] for r, s in pt.elements]
    if route == "closed_form":
        w = frequency_matrix(energies, p.hbar)
        return times, [abs(rho0[r, s]) * np.exp(-0.5 * p.sigma ** 2 * w[r, s] ** 2 * tau * times)
                       for r, s in pt.elements]
    h = pt.spec.base
    alpha = alpha_from_params(p)
    dt = lindblad_dt(cfg, h, alpha, p, pt.n_steps * tau)
    sub = max(1, math.ceil(tau / dt - 1e-9))
    run = integrate(DensityMatrix(rho0), h, alpha, pt.n_steps * tau, tau / sub, p.hbar, record_every=sub)
    return times, [np.abs(run.rhos[:, r, s]) for r, s in pt.elements]


def run_sweep(cfg: RunConfig) -> ComparisonReport:
    """Fitted decay rate against one parameter and the log-log slope."""
    axis = cfg.sweep_axis
    values = cfg.sweep_values if cfg.sweep_values is not None else SWEEP_DEFAULTS[axis]
    if len(values) < 3:
        raise ValidationError("a sweep needs at least 3 values")
    if np.any(np.asarray(values, dtype=float) <= 0):
        raise ValidationError("sweep values must be positive for a log-log fit")
    route = cfg.sweep_route
    seed = _require_seed(cfg, "sweep") if route == "montecarlo" else (cfg.seed or 0)
    points = _sweep_points(cfg, values, seed)

    def work(pt):
        return _sweep_magnitudes(pt, route, cfg.chunk_size, cfg)

    with ThreadPoolExecutor(max_workers=max(1, min(cfg.workers, len(points)))) as pool:
        results = list(pool.map(work, points))

    xs, rates, cf_rates, npts, steps = [], [], [], [], []
    for pt, (times, mags) in zip(points, results):
        for (r, s), om, mag in zip(pt.elements, pt.omegas, mags):
            rate, used = fit_decay_rate(times, mag, initial=float(mag[0]))
            x = abs(om) if axis == "omega" else pt.value
            xs.append(x)
            rates.append(rate)
            cf_rates.append(decay_rate(om, pt.params))
            npts.append(used)
            steps.append(pt.n_steps)
    if np.any(np.asarray(rates) <= 0):
        raise FitFailure("non-positive fitted decay rate; decay is below the noise")
    slope, _ = np.polyfit(np.log(xs), np.log(rates), 1)
    cf_slope, _ = np.polyfit(np.log(xs), np.log(cf_rates), 1)
    expected = SWEEP_EXPECTED_SLOPE[axis]
    tol = cfg.sweep_slope_tol
    metrics = {
        "axis": axis, "route": route, "values": xs, "fitted_rates": rates,
        "closed_form_rates": cf_rates, "fit_points": npts, "n_steps": steps,
        "slope": float(slope), "closed_form_slope": float(cf_slope), "expected_slope": expected,
        "rate_rel_deviation": [abs(a - b) / b for a, b in zip(rates, cf_rates)],
    }
    criteria = [Criterion(f"slope_{axis}", float(slope), (expected - tol, expected + tol), "in")]
    series = {"sweep": Series({
        axis: np.asarray(xs), "fitted_rate": np.asarray(rates),
        "closed_form_rate": np.asarray(cf_rates), "fit_points": np.asarray(npts),
        "n_steps": np.asarray(steps),
    })}
    return ComparisonReport("sweep", criteria, metrics, series, cfg.seed)


EXPERIMENTS = {
    "decay": run_decay,
    "lindblad": run_lindblad,
    "montecarlo": run_montecarlo,
    "crossval": run_cross_validation,
    "measure": run_measurement,
    "ehrenfest": run_ehrenfest,
    "nosignal": run_no_signaling,
    "sweep": run_sweep,
}
STOCHASTIC = frozenset({"montecarlo", "crossval", "measure", "sweep"})
