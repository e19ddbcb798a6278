import numpy as np
import pytest

from apps.backend.core.errors import OracleSizeError, PreconditionError, RepresentationError, ValidationError
from apps.backend.core.fock import (
    FockState,
    apply_annihilation,
    apply_creation,
    fock_append_modes,
    fock_build_bcs,
    fock_fidelity,
    fock_ground_state,
    fock_imaginary_time_gs,
    fock_inner,
    fock_number_operator,
    fock_pairing_matrix,
    fock_project_vacuum,
    fock_quadratic_matrix,
    fock_reorder,
    fock_vacuum,
    popcount,
    trotter_factors,
)
from apps.backend.core.gaussian import QuadraticHamiltonian, bdg_spectrum
from conftest import random_antisymmetric


def test_popcount():
    np.testing.assert_array_equal(popcount(np.array([0, 1, 3, 255, 256, 1023])), [0, 1, 2, 8, 1, 10])


def test_fock_state_requires_power_of_two():
    with pytest.raises(ValidationError):
        FockState(np.ones(3))


def test_oracle_refuses_large_mode_counts():
    with pytest.raises(OracleSizeError):
        fock_vacuum(15)


def test_creation_signs():
    state = apply_creation(apply_creation(fock_vacuum(3), 0), 2)
    # a+_2 a+_0 |vac> = -a+_0 a+_2 |vac>
    assert state.amplitudes[0b101] == -1.0
    back = apply_annihilation(apply_annihilation(state, 2), 0)
    assert back.amplitudes[0] == 1.0


def test_canonical_anticommutation():
    vac = fock_vacuum(3)
    psi = apply_creation(apply_creation(vac, 1), 2)
    for p in range(3):
        for q in range(3):
            ab = apply_annihilation(apply_creation(psi, q), p).amplitudes
            ba = apply_creation(apply_annihilation(psi, p), q).amplitudes
            np.testing.assert_array_equal(ab + ba, psi.amplitudes if p == q else 0.0)


def test_build_bcs_and_read_back(rng):
    T = random_antisymmetric(rng, 6)
    state = fock_build_bcs(T)
    assert state.amplitudes[0] == 1.0
    np.testing.assert_allclose(fock_pairing_matrix(state), T)


def test_build_bcs_has_even_parity(rng):
    state = fock_build_bcs(random_antisymmetric(rng, 5))
    odd = popcount(np.arange(32)) % 2 == 1
    np.testing.assert_array_equal(state.amplitudes[odd], 0.0)


def test_pairing_matrix_needs_vacuum_component():
    state = apply_creation(apply_creation(fock_vacuum(2), 0), 1)
    with pytest.raises(RepresentationError):
        fock_pairing_matrix(state)


def test_reorder_swaps_with_fermionic_sign():
    state = apply_creation(apply_creation(fock_vacuum(2, ("a", "b")), 1), 0)
    swapped = fock_reorder(state, [1, 0])
    assert swapped.modes == ("b", "a")
    assert swapped.amplitudes[0b11] == -state.amplitudes[0b11]


def test_reorder_matches_permuted_pairing(rng):
    T = random_antisymmetric(rng, 5)
    order = [3, 0, 4, 1, 2]
    reordered = fock_reorder(fock_build_bcs(T), order)
    np.testing.assert_allclose(fock_pairing_matrix(reordered), T[np.ix_(order, order)])


def test_project_vacuum_keeps_remaining_modes(rng):
    T = random_antisymmetric(rng, 5)
    projected = fock_project_vacuum(fock_build_bcs(T, modes=tuple("abcde")), [1, 3])
    assert projected.modes == ("a", "c", "e")
    np.testing.assert_allclose(fock_pairing_matrix(projected), T[np.ix_([0, 2, 4], [0, 2, 4])])


def test_append_modes_extends_labels():
    state = fock_append_modes(fock_vacuum(2, ("a", "b")), 2, ("c", "d"))
    assert state.num_modes == 4
    assert state.modes == ("a", "b", "c", "d")
    assert state.amplitudes[0] == 1.0


def test_number_operator_counts_particles():
    N = fock_number_operator(3)
    state = apply_creation(apply_creation(fock_vacuum(3), 0), 2)
    assert np.isclose(fock_inner(state, FockState(N @ state.amplitudes)), 2.0)


def test_quadratic_matrix_is_hermitian(rng):
    H = QuadraticHamiltonian(np.diag([0.5, -1.0, 2.0]) + 0j, random_antisymmetric(rng, 3))
    matrix = fock_quadratic_matrix(H).toarray()
    np.testing.assert_allclose(matrix, matrix.conj().T, atol=1e-14)


def test_trotter_factors_reject_large_step():
    H = QuadraticHamiltonian(np.diag([1.0, 2.0]))
    with pytest.raises(PreconditionError):
        trotter_factors(H, 0.6)


def test_imaginary_time_rejects_bad_arguments():
    H = QuadraticHamiltonian(np.eye(2))
    with pytest.raises(PreconditionError):
        fock_imaginary_time_gs(H, 0.0, 4)
    with pytest.raises(PreconditionError):
        fock_imaginary_time_gs(H, 1.0, 0)


def test_imaginary_time_of_hopping_only_hamiltonian_stays_vacuum():
    H = QuadraticHamiltonian(np.diag([0.5, 1.5]))
    state = fock_imaginary_time_gs(H, 2.0, 8)
    assert np.isclose(state.amplitudes[0], 1.0)
    np.testing.assert_allclose(state.amplitudes[1:], 0.0, atol=1e-14)


def test_single_pair_trotter_step_matches_closed_form():
    # on the vacuum only the pair-creation factor acts: (1 - eps * delta * a+_0 a+_1)|vac>
    h, delta, eps = 0.5, 0.3, 0.1
    pairing = np.array([[0, delta], [-delta, 0]])
    H = QuadraticHamiltonian(h * np.eye(2), pairing)
    state = fock_imaginary_time_gs(H, eps, 1)
    assert np.isclose(state.amplitudes[0], 1.0)
    assert np.isclose(state.amplitudes[0b11], -eps * delta)


def test_imaginary_time_converges_to_ground_state():
    pairing = np.array([[0, 0.3], [-0.3, 0]])
    H = QuadraticHamiltonian(np.eye(2) + 0j, pairing)
    beta = 20.0 / bdg_spectrum(H).min()
    state = fock_imaginary_time_gs(H, beta, 2000)
    _, ground = fock_ground_state(H)
    assert fock_fidelity(state, ground) > 1.0 - 1e-6
