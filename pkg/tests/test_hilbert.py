import math

import numpy as np
import pytest

from chaotic_planck.errors import DimMismatch, InvalidDensity, NonHermitian, NotNormalized
from chaotic_planck.hilbert import (
    DensityMatrix,
    HermitianOperator,
    StateVector,
    expectation,
    partial_trace,
    pure_density,
    random_density,
    random_hermitian,
    spectral_decompose,
    trace_distance,
    von_neumann_entropy,
)


def test_identity_spectrum():
    dec = spectral_decompose(HermitianOperator(np.eye(2)))
    np.testing.assert_allclose(dec.energies, [1.0, 1.0])
    v = dec.eigenvectors
    np.testing.assert_allclose(v.conj().T @ v, np.eye(2), atol=1e-12)


def test_diagonal_spectrum():
    dec = spectral_decompose(HermitianOperator(np.diag([0.0, 1.0])))
    np.testing.assert_allclose(dec.energies, [0.0, 1.0])
    np.testing.assert_allclose(np.abs(dec.eigenvectors), np.eye(2), atol=1e-12)


def test_pauli_x_spectrum():
    dec = spectral_decompose(HermitianOperator([[0, 1], [1, 0]]))
    np.testing.assert_allclose(dec.energies, [-1.0, 1.0], atol=1e-14)


def test_reconstruction_random(rng):
    for d in (1, 3, 16, 64):
        h = random_hermitian(d, rng)
        dec = spectral_decompose(h)
        err = np.linalg.norm(dec.reconstruct() - h.elements) / np.linalg.norm(h.elements)
        assert err <= 1e-10
        assert np.all(np.diff(dec.energies) >= 0)
        resid = h.elements @ dec.eigenvectors - dec.eigenvectors * dec.energies
        assert np.max(np.abs(resid)) <= 1e-10 * max(1.0, h.norm())


def test_non_hermitian_rejected():
    with pytest.raises(NonHermitian):
        HermitianOperator([[0, 1], [0, 0]])


def test_hermitian_tolerance_is_relative():
    m = 1e6 * np.array([[1.0, 1.0], [1.0, 2.0]], dtype=complex)
    m[0, 1] += 1e-7  # 1e-13 relative
    HermitianOperator(m)


def test_pure_density_examples():
    np.testing.assert_allclose(pure_density(StateVector([1, 0])).elements, np.diag([1, 0]))
    np.testing.assert_allclose(pure_density(StateVector.normalized([1, 1])).elements,
                               np.full((2, 2), 0.5), atol=1e-15)
    rho = pure_density(StateVector([math.sqrt(0.3), 1j * math.sqrt(0.7)])).elements
    np.testing.assert_allclose(np.diag(rho).real, [0.3, 0.7], atol=1e-15)
    assert abs(abs(rho[0, 1]) - math.sqrt(0.21)) < 1e-15
    np.testing.assert_allclose(rho @ rho, rho, atol=1e-12)


def test_not_normalized():
    with pytest.raises(NotNormalized):
        StateVector([1.0, 1.0])


def test_expectation_examples():
    assert expectation(DensityMatrix(np.diag([1.0, 0.0])), HermitianOperator(np.diag([5.0, 7.0]))) == 5.0
    o = HermitianOperator([[2.0, 1 - 1j], [1 + 1j, -3.0]])
    assert abs(expectation(DensityMatrix.maximally_mixed(2), o) - (-0.5)) < 1e-15
    plus = pure_density(StateVector.normalized([1, 1]))
    assert abs(expectation(plus, HermitianOperator([[0, 1], [1, 0]])) - 1.0) < 1e-15
    with pytest.raises(DimMismatch):
        expectation(plus, HermitianOperator(np.eye(3)))


def test_entropy_examples():
    assert von_neumann_entropy(pure_density(StateVector.normalized([1, 2j]))) == pytest.approx(0, abs=1e-12)
    assert von_neumann_entropy(DensityMatrix.maximally_mixed(2)) == pytest.approx(math.log(2), abs=1e-14)
    s = von_neumann_entropy(DensityMatrix(np.diag([0.3, 0.7])))
    assert s == pytest.approx(0.6108643020548935, abs=1e-14)


def test_density_negativity_policy():
    DensityMatrix(np.diag([1 + 1e-10, -1e-10]))
    with pytest.raises(InvalidDensity):
        DensityMatrix(np.diag([1 + 1e-6, -1e-6]))
    with pytest.raises(InvalidDensity):
        DensityMatrix(np.diag([0.5, 0.4]))


def test_trace_distance_examples():
    a, b = DensityMatrix(np.diag([1.0, 0.0])), DensityMatrix(np.diag([0.0, 1.0]))
    assert trace_distance(a, a) == 0.0
    assert trace_distance(a, b) == pytest.approx(1.0, abs=1e-15)
    assert trace_distance(a, DensityMatrix.maximally_mixed(2)) == pytest.approx(0.5, abs=1e-15)


def test_partial_trace_examples(rng):
    r1, r2 = random_density(2, rng), random_density(3, rng)
    joint = DensityMatrix(np.kron(r1.elements, r2.elements))
    np.testing.assert_allclose(partial_trace(joint, (2, 3), 1).elements, r1.elements, atol=1e-12)
    np.testing.assert_allclose(partial_trace(joint, (2, 3), 2).elements, r2.elements, atol=1e-12)
    bell = pure_density(StateVector.normalized([1, 0, 0, 1]))
    np.testing.assert_allclose(partial_trace(bell, (2, 2), 1).elements, np.eye(2) / 2, atol=1e-15)
    with pytest.raises(DimMismatch):
        partial_trace(bell, (2, 3), 1)


def test_immutability():
    h = HermitianOperator(np.eye(2))
    with pytest.raises(ValueError):
        h.elements[0, 0] = 3.0
