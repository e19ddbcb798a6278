import numpy as np
import pytest

from apps.backend.core.errors import GeometryError, ValidationError
from apps.backend.core.gaussian import PairingState, transform_modes
from apps.backend.core.hamiltonians import (
    build_quadratic,
    exact_ground,
    naive_kspec,
    staggered_d2_kspec,
    staggered_d3_kspec,
)
from apps.backend.core.lattice import LatticeGeometry, PermutationMatrix, leg_permutation
from apps.backend.core.symmetry import (
    ETA_D2,
    ChargeOperator,
    PhysicalRotation,
    bond_weight_conditions,
    charge_residual,
    check_J_relations,
    circulant_tau,
    cubic_tau,
    eta_spinhalf,
    eta_staggered_d3,
    four_rotation_product,
    hamiltonian_rotation_residual,
    nn_amplitude_dimension,
    no_go_spinless_d3,
    physical_rotation,
    rotation_residual,
    solve_t_constraint,
    solve_tau_constraint,
    span_residual,
    staggered_product_signs,
    tau_constraint_residual,
)
from conftest import random_antisymmetric, random_complex

SQUARE = LatticeGeometry.cubic(2, 4)
CUBE = LatticeGeometry.cubic(3, 4)
R_SQUARE = leg_permutation(SQUARE, None)
R_CUBE = [leg_permutation(CUBE, axis) for axis in (1, 2, 3)]


def test_staggered_phase_at_origin():
    assert eta_staggered_d3(1, (0, 0, 0)) == pytest.approx((1 - 1j) / np.sqrt(2))
    assert eta_staggered_d3(3, (0, 0, 1)) == pytest.approx((1 - 1j) / np.sqrt(2))
    with pytest.raises(ValidationError):
        eta_staggered_d3(4, (0, 0, 0))


def test_spinhalf_phases_compose():
    eta = {i: eta_spinhalf(i) for i in (1, 2, 3)}
    for value in eta.values():
        np.testing.assert_allclose(value.conj().T @ value, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(eta[2], eta[1] @ eta[3] @ eta[1].conj().T, atol=1e-14)


def test_J_relations_hold_for_creation_factor():
    report = check_J_relations()
    assert len(report.deviations) == 9
    assert report.passed(1e-12)


@pytest.mark.parametrize("kind,geom,axes", [
    ("d2", SQUARE, (None,)),
    ("spinhalf", CUBE, (1, 2, 3)),
])
def test_four_rotations_give_minus_one(kind, geom, axes):
    for axis in axes:
        rot = physical_rotation(geom, kind, axis)
        assert all(four_rotation_product(rot, site) == -1 for site in geom.sites())


def test_staggered_four_rotation_signs():
    signs = staggered_product_signs(CUBE)
    for axis in (1, 2, 3):
        assert len(signs[axis]) == CUBE.num_sites
        assert set(signs[axis]) == {-1}


@pytest.mark.parametrize("spec,kind", [
    (staggered_d2_kspec(SQUARE, 0.6), "d2"),
    (staggered_d3_kspec(CUBE, 0.6), "staggered_d3"),
    (naive_kspec(CUBE, 0.6, "upper"), "spinhalf"),
])
def test_hamiltonians_are_rotation_invariant(spec, kind):
    H = build_quadratic(spec)
    for axis in ((None,) if spec.geom.dim == 2 else (1, 2, 3)):
        assert hamiltonian_rotation_residual(H, physical_rotation(spec.geom, kind, axis)) < 1e-12


def test_wrong_phase_breaks_rotation_invariance():
    H = build_quadratic(staggered_d2_kspec(SQUARE, 0.6))
    assert hamiltonian_rotation_residual(H, physical_rotation(SQUARE, "d2", eta=1.0)) > 0.1


def test_ground_state_is_rotation_and_charge_invariant():
    state = exact_ground(staggered_d2_kspec(SQUARE, 0.6))
    assert rotation_residual(state, physical_rotation(SQUARE, "d2")) < 1e-10
    assert charge_residual(state, SQUARE) < 1e-10


def test_dense_state_under_spinhalf_rotation_stays_dense():
    geom = LatticeGeometry.cubic(3, 2)
    state = PairingState.vacuum(16)
    for axis in (1, 2, 3):
        rot = physical_rotation(geom, "spinhalf", axis)
        assert not transform_modes(state, rot.unitary()).is_sparse
        assert rotation_residual(state, rot) == 0.0


def test_charge_residual_detects_same_parity_pairs(rng):
    assert charge_residual(PairingState(random_antisymmetric(rng, 16)), SQUARE) > 0.1
    with pytest.raises(ValidationError):
        charge_residual(PairingState.vacuum(3), SQUARE)


def test_charge_signs_repeat_per_spin():
    signs = ChargeOperator(LatticeGeometry.cubic(2, 2), n_s=2).signs
    np.testing.assert_array_equal(signs, [1, 1, -1, -1, -1, -1, 1, 1])


def test_rotation_validation():
    with pytest.raises(ValidationError):
        physical_rotation(CUBE, "d2")
    with pytest.raises(ValidationError):
        physical_rotation(SQUARE, "hexagonal")
    with pytest.raises(GeometryError):
        physical_rotation(LatticeGeometry.cubic(2, 1), "d2")
    with pytest.raises(GeometryError):
        physical_rotation(LatticeGeometry(dim=2, extent=(4, 2)), "d2")
    with pytest.raises(ValidationError):
        PhysicalRotation(SQUARE, None, np.full(16, 2.0))


def test_t_constraint_is_all_ones():
    for Rs, n in ((R_SQUARE, 4), (R_CUBE, 6)):
        basis = solve_t_constraint(Rs)
        assert len(basis) == 1
        assert span_residual(basis, np.ones(n)) < 1e-12


def test_tau_constraint_dimensions():
    assert len(solve_tau_constraint(R_SQUARE)) == 4
    assert len(solve_tau_constraint(R_CUBE)) == 3
    assert len(solve_tau_constraint(PermutationMatrix.identity(4))) == 16


def test_tau_patterns_span_invariant_space(rng):
    z4, z3 = random_complex(rng, 4), random_complex(rng, 3)
    assert span_residual(solve_tau_constraint(R_SQUARE), circulant_tau(z4)) < 1e-12
    assert span_residual(solve_tau_constraint(R_CUBE), cubic_tau(z3)) < 1e-12
    assert tau_constraint_residual(circulant_tau(z4), [R_SQUARE]) == 0.0
    assert tau_constraint_residual(cubic_tau(z3), R_CUBE) == 0.0
    assert tau_constraint_residual(random_complex(rng, 6, 6), R_CUBE) > 0.1


def test_circulant_layout():
    tau = circulant_tau([1, 2, 3, 4])
    np.testing.assert_array_equal(tau[0], [1, 2, 3, 4])
    np.testing.assert_array_equal(tau[1], [4, 1, 2, 3])
    with pytest.raises(ValidationError):
        circulant_tau([1, 2, 3])
    with pytest.raises(ValidationError):
        cubic_tau([1, 2])


def test_nearest_neighbour_dimensions():
    assert nn_amplitude_dimension(ETA_D2, 2) == 1
    assert nn_amplitude_dimension(1.0, 3, statistics=1) == 1
    assert no_go_spinless_d3() == 0


@pytest.mark.parametrize("phase", [0.0, 0.25, 0.5, 1.0])
def test_no_go_holds_for_any_constant_phase(phase):
    assert no_go_spinless_d3(np.exp(1j * np.pi * phase)) == 0


def test_bond_weight_conditions():
    W_C = [1.0, np.conj(ETA_D2) ** 2]
    W_D = [1.0, ETA_D2 ** 2]
    assert bond_weight_conditions(W_C, W_D) < 1e-15
    assert bond_weight_conditions(W_D, W_C) > 1.0
