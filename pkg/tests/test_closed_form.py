import csv
import math

import numpy as np
import pytest

from chaotic_planck.closed_form import (
    approximation_discrepancy,
    closed_form_in_basis,
    closed_form_matrix,
    closed_form_rho,
    decay_factor_quadrature,
    decay_rate,
    gaussian_decay_factor,
    predict,
    write_curve_csv,
)
from chaotic_planck.errors import DimMismatch, ZeroSigma
from chaotic_planck.hilbert import DensityMatrix, random_density, random_hermitian
from chaotic_planck.lambda_process import LambdaParams

QUBIT = LambdaParams(sigma=0.1, tau_lambda=0.2)

# E[exp(-i a hbar/lambda)] and E[exp(-i a (2 - lambda/hbar))] for ln(lambda) ~ N(0, s^2),
# evaluated independently with mpmath at 30 digits: (a, s) -> (exact, linearized)
ORACLE = {
    (1.0, 0.1): (0.53340719411620767 - 0.83986803786174185j, 0.54171412927786875 - 0.83453421613339402j),
    (2.0, 0.1): (-0.41633512403277945 - 0.88707107329889057j, -0.39920280382259557 - 0.89491180906680062j),
    (1.0, 0.05): (0.53857586972424256 - 0.84108846514804632j, 0.54067293266551116 - 0.83974195651830823j),
    (5.0, 0.5): (-0.12798442650262985 + 0.12374787545181076j, 0.17470954511702794 + 0.034207089192813657j),
}


def test_gaussian_factor_examples():
    assert gaussian_decay_factor(0.0, QUBIT) == 1.0
    assert gaussian_decay_factor(7.0, LambdaParams(sigma=0.0, tau_lambda=0.2)) == 1.0
    assert gaussian_decay_factor(5.0, QUBIT) == pytest.approx(0.9950124791926823, abs=1e-15)
    assert predict(0.0, QUBIT).factor_per_step == 1.0


def test_closed_form_qubit():
    rho0 = np.full((2, 2), 0.5, dtype=complex)
    e = [0.0, 5.0]
    # exponent 0.005 * 25 * 0.2 * t: 0.2 at t = 8, 1.0 at t = 40
    assert abs(closed_form_matrix(rho0, e, QUBIT, 8.0)[0, 1]) == pytest.approx(0.5 * math.exp(-0.2), rel=1e-14)
    assert abs(closed_form_matrix(rho0, e, QUBIT, 40.0)[0, 1]) == pytest.approx(0.5 * math.exp(-1.0), rel=1e-14)
    assert decay_rate(5.0, QUBIT) * 40.0 == pytest.approx(1.0, rel=1e-14)


def test_closed_form_trivial_cases(rng):
    e = np.array([0.0, 0.7, 2.0])
    diag = DensityMatrix(np.diag([0.2, 0.3, 0.5]).astype(complex))
    np.testing.assert_array_equal(closed_form_rho(diag, e, QUBIT, 13.0).elements, diag.elements)
    r = random_density(3, rng)
    out = closed_form_matrix(r.elements, e, LambdaParams(sigma=0.0), 5.0)
    np.testing.assert_allclose(np.abs(out), np.abs(r.elements), atol=1e-15)
    out = closed_form_rho(r, e, QUBIT, 3.0).elements
    np.testing.assert_allclose(out, out.conj().T, atol=1e-15)
    with pytest.raises(DimMismatch):
        closed_form_rho(r, e[:2], QUBIT, 1.0)


def test_semigroup(rng):
    e = np.sort(rng.normal(size=4))
    r = random_density(4, rng).elements
    a = closed_form_matrix(closed_form_matrix(r, e, QUBIT, 1.3), e, QUBIT, 2.1)
    np.testing.assert_allclose(a, closed_form_matrix(r, e, QUBIT, 3.4), atol=1e-12)


def test_monotone_in_frequency():
    ws = np.linspace(0, 10, 21)
    f = [gaussian_decay_factor(w, QUBIT) for w in ws]
    assert np.all(np.diff(f) < 0)


def test_basis_helper_matches_energy_basis(rng):
    h = random_hermitian(4, rng)
    r = random_density(4, rng)
    out = closed_form_in_basis(r, h, QUBIT, 2.0).elements
    e, v = np.linalg.eigh(h.elements)
    ref = v @ closed_form_matrix(v.conj().T @ r.elements @ v, e, QUBIT, 2.0) @ v.conj().T
    np.testing.assert_allclose(out, ref, atol=1e-12)


@pytest.mark.parametrize("key", sorted(ORACLE))
def test_quadrature_against_mpmath(key):
    a, s = key
    p = LambdaParams(sigma=s, tau_lambda=1.0)
    exact, lin = ORACLE[key]
    assert abs(decay_factor_quadrature(a, p) - exact) < 1e-10
    assert abs(decay_factor_quadrature(a, p, form="linearized") - lin) < 1e-10


def test_quadrature_trivial_and_errors():
    assert decay_factor_quadrature(0.0, QUBIT) == 1.0
    with pytest.raises(ZeroSigma):
        decay_factor_quadrature(1.0, LambdaParams(sigma=0.0))


def test_gaussian_regime():
    assert approximation_discrepancy(1.0, LambdaParams(sigma=0.05, tau_lambda=1.0)) < 1e-3
    for s in (0.02, 0.05, 0.1):
        for a in (0.25, 0.5, 1.0, 1.5, 2.0):
            assert approximation_discrepancy(a, LambdaParams(sigma=s, tau_lambda=1.0)) <= 1e-2
    # breakdown region must be detected
    assert approximation_discrepancy(5.0, LambdaParams(sigma=0.5, tau_lambda=1.0)) > 1e-2


def test_quadrature_phase_small_sigma():
    p = LambdaParams(sigma=0.01, tau_lambda=1.0)
    q = decay_factor_quadrature(1.0, p)
    assert abs(np.angle(q) - (-1.0)) < 1e-3


def test_curve_csv(tmp_path):
    path = tmp_path / "curve.csv"
    write_curve_csv(path, [0.0, 0.2, 0.4], 0.5, 5.0, QUBIT)
    raw = path.read_bytes()
    assert b"\r" not in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["t", "abs", "phase"]
    assert float(rows[2][1]) == pytest.approx(0.5 * math.exp(-decay_rate(5.0, QUBIT) * 0.2))
