import numpy as np
import pytest

from apps.backend.core.covariance import (
    CovarianceMatrix,
    covariance_roundtrip,
    covariance_to_pairing,
    covariance_variance,
    majorana_hamiltonian,
    pairing_to_covariance,
)
from apps.backend.core.errors import RepresentationError, ValidationError
from apps.backend.core.gaussian import PairingState, QuadraticHamiltonian
from conftest import random_antisymmetric, random_hermitian

VACUUM_BLOCK = np.array([[0.0, -1.0], [1.0, 0.0]])


def test_vacuum_covariance():
    cov = pairing_to_covariance(PairingState.vacuum(3))
    np.testing.assert_allclose(cov.gamma, np.kron(np.eye(3), VACUUM_BLOCK), atol=1e-14)
    assert cov.purity_deviation() < 1e-14


@pytest.mark.parametrize("n", [1, 4, 9])
def test_roundtrip_recovers_pairing(rng, n):
    state = PairingState(random_antisymmetric(rng, n, scale=1.5), modes=tuple(range(n)))
    cov, recovered, error = covariance_roundtrip(state)
    assert error < 1e-10
    assert recovered.modes == state.modes
    assert cov.purity_deviation() < 1e-10
    assert np.isclose(cov.max_singular_value(), 1.0)


def test_covariance_is_real_antisymmetric(rng):
    gamma = pairing_to_covariance(PairingState(random_antisymmetric(rng, 5))).gamma
    assert gamma.dtype == np.float64
    np.testing.assert_allclose(gamma, -gamma.T, atol=1e-12)


def test_occupied_mode_has_no_pairing_form():
    with pytest.raises(RepresentationError):
        covariance_to_pairing(CovarianceMatrix(-VACUUM_BLOCK))


def test_covariance_matrix_validation():
    with pytest.raises(ValidationError):
        CovarianceMatrix(np.zeros((3, 3)))
    with pytest.raises(ValidationError):
        CovarianceMatrix(np.ones((2, 2)))


def test_majorana_hamiltonian_is_real_antisymmetric(rng):
    H = QuadraticHamiltonian(random_hermitian(rng, 4), random_antisymmetric(rng, 4))
    h = majorana_hamiltonian(H)
    assert np.isrealobj(h)
    np.testing.assert_allclose(h, -h.T, atol=1e-12)


def test_single_mode_vacuum_has_zero_variance():
    H = QuadraticHamiltonian(np.array([[0.7]]))
    assert covariance_variance(H, PairingState.vacuum(1)) == pytest.approx(0.0, abs=1e-14)


def test_two_mode_pair_variance():
    # H = n_0 on (1 + z a+_0 a+_1)|vac> has <n_0> = p, variance p (1 - p)
    z = 0.8
    H = QuadraticHamiltonian(np.diag([1.0, 0.0]))
    state = PairingState(np.array([[0, z], [-z, 0]]))
    p = z ** 2 / (1 + z ** 2)
    assert covariance_variance(H, state) == pytest.approx(p * (1 - p), rel=1e-10)
