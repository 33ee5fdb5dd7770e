import csv
import math

import numpy as np
import pytest

from chaotic_planck.closed_form import closed_form_matrix, decay_factor_quadrature, decay_rate
from chaotic_planck.errors import FitFailure, IndexOutOfRange, NonCommensurateTime, ValidationError
from chaotic_planck.hilbert import HermitianOperator, StateVector, random_hermitian, random_state
from chaotic_planck.lambda_process import LambdaParams, LambdaStream, sample_path
from chaotic_planck.montecarlo import (
    average_density,
    coherence_series,
    fit_decay_rate,
    stderr_scaling,
    steps_for,
    summary,
    write_csv,
)
from chaotic_planck.propagator import LambdaHamiltonianSpec, evolve_path, exact_unitary

QUBIT = LambdaHamiltonianSpec(HermitianOperator(np.diag([0.0, 5.0])))
PLUS = StateVector.normalized([1, 1])
P = LambdaParams(sigma=0.1, tau_lambda=0.2)


def test_steps_for():
    assert steps_for(8.0, 0.2) == 40
    with pytest.raises(NonCommensurateTime):
        steps_for(8.1, 0.2)
    with pytest.raises(NonCommensurateTime):
        average_density(QUBIT, P, PLUS, 0.3, 10, 1)


def test_quantum_limit_is_unitary(rng):
    h = random_hermitian(5, rng)
    psi = random_state(5, rng)
    p = LambdaParams(sigma=0.0, tau_lambda=0.25)
    est = average_density(LambdaHamiltonianSpec(h), p, psi, 5.0, 17, 3)
    for k in (0, 7, 20):
        phi = exact_unitary(h, est.times[k]) @ psi.amplitudes
        np.testing.assert_allclose(est.in_original_basis(k), np.outer(phi, phi.conj()), atol=1e-12)
    assert np.all(est.stderr == 0)


def test_eigenstate_static_zero_variance(rng):
    h = random_hermitian(3, rng)
    v = np.linalg.eigh(h.elements)[1][:, 0]
    est = average_density(LambdaHamiltonianSpec(h), P, StateVector(v), 2.0, 200, 4)
    for k in range(est.times.size):
        np.testing.assert_allclose(est.in_original_basis(k), np.outer(v, v.conj()), atol=1e-12)
    assert np.max(est.stderr) < 1e-12


def test_matches_explicit_path_loop(rng):
    spec = LambdaHamiltonianSpec.from_split(random_hermitian(3, rng), random_hermitian(3, rng))
    psi = random_state(3, rng)
    for s in (spec, LambdaHamiltonianSpec(spec.base)):
        est = average_density(s, P, psi, 1.0, 37, 9, chunk_size=8)
        acc = 0
        for i in range(37):
            rec = evolve_path(s, psi, sample_path(P, 5, LambdaStream(9, i)))
            acc = acc + np.einsum("ti,tj->tij", rec.states, rec.states.conj())
        ref = acc / 37
        got = np.array([est.in_original_basis(k) for k in range(6)])
        np.testing.assert_allclose(got, ref, atol=1e-12)


def test_qubit_benchmark():
    est = average_density(QUBIT, P, PLUS, 8.0, 10 ** 4, 42)
    mag, se = est.magnitude(0, 1)
    cf = 0.5 * math.exp(-0.2)
    assert abs(mag[-1] - cf) <= 3 * se[-1]
    assert abs(mag[-1] - cf) <= 0.05 * cf


def test_unbiased_single_step():
    # one interval: rho_01 = rho_01(0) E[exp(-i w_01 tau hbar/lambda)] with w_01 = -5
    p = LambdaParams(sigma=0.3, tau_lambda=0.5)
    est = average_density(QUBIT, p, PLUS, 0.5, 10 ** 5, 123, workers=4)
    ref = 0.5 * decay_factor_quadrature(-5.0, p)
    z = est.rho_tilde[1, 0, 1]
    assert abs(z.real - ref.real) <= 3 * est.stderr_re[1, 0, 1]
    assert abs(z.imag - ref.imag) <= 3 * est.stderr_im[1, 0, 1]


def test_stderr_scaling():
    ns = [10 ** 3, 10 ** 4, 10 ** 5]
    ses = [average_density(QUBIT, P, PLUS, 2.0, n, 77, workers=4).magnitude(0, 1)[1][-1] for n in ns]
    ratios = stderr_scaling(ses, ns)
    assert np.all(np.abs(ratios - 1.0) <= 0.2)


def test_worker_determinism():
    runs = [average_density(QUBIT, P, PLUS, 4.0, 3000, 5, workers=w, chunk_size=128) for w in (1, 4, 8)]
    for r in runs[1:]:
        assert np.array_equal(r.rho_tilde, runs[0].rho_tilde)
        assert np.array_equal(r.stderr_re, runs[0].stderr_re)
        assert np.array_equal(r.cov_reim, runs[0].cov_reim)


def test_positivity_and_trace(rng):
    spec = LambdaHamiltonianSpec(random_hermitian(6, rng))
    est = average_density(spec, LambdaParams(sigma=0.4, tau_lambda=0.3), random_state(6, rng), 3.0, 500, 6)
    for m in est.rho_tilde:
        assert np.linalg.eigvalsh(m)[0] >= -1e-12
        assert abs(np.trace(m) - 1) <= 1e-10
        np.testing.assert_allclose(m, m.conj().T, atol=1e-15)


def test_coherence_series():
    ser = coherence_series(QUBIT, P, PLUS, 8.0, 10 ** 4, 42)
    assert ser.times[0] == pytest.approx(0.2) and ser.times.size == 40
    diag = coherence_series(QUBIT, P, PLUS, 8.0, 500, 1, element=(0, 0))
    np.testing.assert_allclose(diag.magnitude, 0.5, atol=1e-10)
    flat = coherence_series(QUBIT, LambdaParams(sigma=0.0, tau_lambda=0.2), PLUS, 8.0, 5, 1)
    np.testing.assert_allclose(flat.magnitude, 0.5, atol=1e-12)
    with pytest.raises(IndexOutOfRange):
        coherence_series(QUBIT, P, PLUS, 8.0, 10, 1, element=(0, 2))


def test_fitted_slope_within_ten_percent():
    est = average_density(QUBIT, P, PLUS, 200.0, 10 ** 4, 8)
    mag, _ = est.magnitude(0, 1)
    rate, used = fit_decay_rate(est.times, mag)
    assert used > 100
    assert rate == pytest.approx(decay_rate(5.0, P), rel=0.1)


def test_fit_failure():
    with pytest.raises(FitFailure):
        fit_decay_rate([0, 1, 2, 3], [1.0, 1.0, 1.0, 1.0])


def test_closed_form_agreement_long_run():
    est = average_density(QUBIT, P, PLUS, 40.0, 10 ** 4, 42)
    mag, se = est.magnitude(0, 1)
    cf = abs(closed_form_matrix(est.rho_tilde[0], est.energies, P, 40.0)[0, 1])
    assert cf == pytest.approx(0.5 * math.exp(-1.0), rel=1e-14)
    assert abs(mag[-1] - cf) <= 3 * se[-1]


def test_validation():
    with pytest.raises(ValidationError):
        average_density(QUBIT, P, PLUS, 1.0, 0, 1)
    with pytest.raises(ValidationError):
        average_density(QUBIT, LambdaParams(mu=0.5, sigma=0.1, tau_lambda=0.2), PLUS, 1.0, 10, 1)


def test_csv_and_summary(tmp_path):
    est = average_density(QUBIT, P, PLUS, 1.0, 50, 2)
    path = tmp_path / "mc.csv"
    write_csv(path, est, [(0, 1)])
    rows = list(csv.reader(path.read_text().splitlines()))
    assert rows[0] == ["t", "rho_01_re", "rho_01_im", "stderr_01_re", "stderr_01_im"]
    assert len(rows) == 7
    s = summary(est, P)
    assert s["seed"] == 2 and s["n_samples"] == 50 and s["params"]["sigma"] == 0.1
