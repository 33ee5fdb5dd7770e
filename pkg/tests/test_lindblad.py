import math

import numpy as np
import pytest
from scipy.linalg import expm

from chaotic_planck.closed_form import closed_form_in_basis, closed_form_matrix
from chaotic_planck.errors import DimMismatch, StepTooLarge, ValidationError
from chaotic_planck.hilbert import (
    DensityMatrix,
    HermitianOperator,
    partial_trace_matrix,
    pure_density,
    random_density,
    random_hermitian,
    StateVector,
)
from chaotic_planck.lambda_process import LambdaParams
from chaotic_planck.lindblad import (
    LindbladConfig,
    alpha_from_params,
    default_dt,
    dt_for_accuracy,
    integrate,
    integrate_to_times,
    master_rhs,
    write_csv,
)

P = LambdaParams(sigma=0.1, tau_lambda=0.2)
H_QUBIT = HermitianOperator(np.diag([0.0, 5.0]))
PLUS = pure_density(StateVector.normalized([1, 1]))


def liouvillian(h, alpha, hbar=1.0):
    # row-major vec: vec(A X B) = (A kron B^T) vec(X)
    d = h.dim
    eye = np.eye(d)
    hm = h.elements
    comm = np.kron(hm, eye) - np.kron(eye, hm.T)
    return (-1j / hbar) * comm - alpha ** 2 * comm @ comm


def test_alpha_examples():
    assert alpha_from_params(LambdaParams(sigma=0.0)) == 0.0
    assert alpha_from_params(P) == pytest.approx(0.1 * math.sqrt(0.1), rel=1e-15)
    assert alpha_from_params(LambdaParams(sigma=0.2, tau_lambda=0.2)) == pytest.approx(2 * alpha_from_params(P))


def test_rhs_examples(rng):
    h = random_hermitian(3, rng)
    e, v = np.linalg.eigh(h.elements)
    rho_diag = v @ np.diag([0.2, 0.5, 0.3]) @ v.conj().T
    assert np.max(np.abs(master_rhs(rho_diag, h, 0.4))) < 1e-14
    r = random_density(3, rng).elements
    vn = -1j * (h.elements @ r - r @ h.elements)
    np.testing.assert_allclose(master_rhs(r, h, 0.0), vn, atol=1e-15)
    out = master_rhs(r, h, 0.3)
    np.testing.assert_allclose(out, out.conj().T, atol=1e-14)
    assert abs(np.trace(out)) < 1e-12
    with pytest.raises(DimMismatch):
        master_rhs(np.eye(2) / 2, h, 0.1)


def test_rhs_qubit_element():
    # omega read as w_01 = (E_0 - E_1)/hbar = -5
    a, c = 0.07, 0.3 - 0.1j
    rho = np.array([[0.5, c], [np.conj(c), 0.5]])
    w = -5.0
    assert master_rhs(rho, H_QUBIT, a)[0, 1] == pytest.approx((-1j * w - a ** 2 * w ** 2) * c, abs=1e-14)


def test_unitary_limit():
    t = math.pi / 5.0
    run = integrate(PLUS, H_QUBIT, 0.0, t, 0.002)
    u = expm(-1j * H_QUBIT.elements * t)
    np.testing.assert_allclose(run.rhos[-1], u @ PLUS.elements @ u.conj().T, atol=1e-8)


def test_qubit_closed_form():
    alpha = alpha_from_params(P)
    dt = dt_for_accuracy(H_QUBIT, alpha, 8.0)
    run = integrate_to_times(PLUS, H_QUBIT, alpha, 0.2, 40, dt)
    ref = np.array([closed_form_matrix(PLUS.elements, [0.0, 5.0], P, t) for t in run.times])
    assert np.max(np.abs(run.rhos - ref)) <= 1e-8
    np.testing.assert_allclose(run.times, 0.2 * np.arange(41), atol=1e-12)


@pytest.mark.parametrize("d", [2, 5, 9, 16])
def test_random_closed_form_and_liouvillian(rng, d):
    h = random_hermitian(d, rng)
    rho0 = random_density(d, rng)
    alpha = alpha_from_params(P)
    t = 2.0
    run = integrate(rho0, h, alpha, t, dt_for_accuracy(h, alpha, t))
    ref = closed_form_in_basis(rho0, h, P, t).elements
    assert np.max(np.abs(run.rhos[-1] - ref)) <= 1e-8
    vec = expm(liouvillian(h, alpha) * t) @ rho0.elements.ravel()
    assert np.max(np.abs(run.rhos[-1] - vec.reshape(d, d))) <= 1e-8


def test_conservation_and_entropy(rng):
    h = random_hermitian(6, rng)
    rho0 = pure_density(StateVector.normalized(rng.normal(size=6) + 1j * rng.normal(size=6)))
    alpha = 0.2
    run = integrate(rho0, h, alpha, 5.0, default_dt(LambdaParams(sigma=0.3, tau_lambda=0.5), h))
    e = run.energies()
    assert np.max(np.abs(e - e[0])) <= 1e-10 * h.norm()
    s = run.entropies()
    assert np.min(np.diff(s)) >= -1e-10
    assert s[-1] > s[0] + 0.1
    ev, v = np.linalg.eigh(h.elements)
    o = HermitianOperator(v @ np.diag(rng.normal(size=6)) @ v.conj().T)
    vals = run.expectations(o)
    assert np.max(np.abs(vals - vals[0])) <= 1e-10 * o.norm()
    assert np.max(np.abs(run.traces() - 1)) <= 1e-10
    assert np.min(run.min_eigenvalues()) >= -1e-9


def test_no_signaling_partial_trace(rng):
    h1, h2 = random_hermitian(2, rng), random_hermitian(3, rng)
    hj = HermitianOperator(np.kron(h1.elements, np.eye(3)) + np.kron(np.eye(2), h2.elements))
    rho0 = random_density(6, rng)
    alpha = 0.15
    dt = min(dt_for_accuracy(hj, alpha, 3.0), dt_for_accuracy(h1, alpha, 3.0))
    run = integrate(rho0, hj, alpha, 3.0, dt)
    red0 = DensityMatrix(partial_trace_matrix(rho0.elements, (2, 3), 1))
    local = integrate(red0, h1, alpha, 3.0, dt)
    red = np.array([partial_trace_matrix(m, (2, 3), 1) for m in run.rhos])
    assert np.max(np.abs(red - local.rhos)) <= 1e-8


def test_guards(rng):
    with pytest.raises(StepTooLarge):
        integrate(PLUS, H_QUBIT, 0.1, 1.0, 0.02)
    with pytest.raises(ValidationError):
        LindbladConfig.from_params(P, H_QUBIT, dt_int=0.05)
    cfg = LindbladConfig.from_params(P, H_QUBIT)
    assert cfg.dt_int == pytest.approx(min(0.2 / 20, 0.05 / 5.0))
    assert cfg.alpha == pytest.approx(alpha_from_params(P))
    with pytest.raises(DimMismatch):
        integrate(PLUS, random_hermitian(3, rng), 0.1, 1.0, 0.001)


def test_csv(tmp_path):
    run = integrate(PLUS, H_QUBIT, 0.03, 0.1, 0.01)
    path = tmp_path / "l.csv"
    write_csv(path, run, [(0, 1)])
    lines = path.read_text().splitlines()
    assert lines[0] == "t,rho_01_re,rho_01_im,energy,entropy,min_eigenvalue"
    assert len(lines) == 12
