import numpy as np
import pytest

from apps.backend.core.errors import OracleSizeError, PreconditionError, ValidationError
from apps.backend.core.fock import fock_build_bcs, fock_fidelity, fock_ground_state
from apps.backend.core.gaussian import fidelity
from apps.backend.core.hamiltonians import build_quadratic, exact_ground, staggered_d2_kspec, staggered_d3_kspec
from apps.backend.core.lattice import LatticeGeometry, ModeIndex, Species
from apps.backend.core.peps import (
    PepsParams,
    assemble_bond_pairing,
    assemble_joint_pairing,
    build_family,
    check_epsilon,
    contract,
    exact_construction_params,
    exact_pairing_weight,
    family_pattern_size,
    fock_contract,
    random_params,
    random_symmetric_params,
    symmetric_params_d2,
    trotter_reference,
    x_matrices,
)
from apps.backend.core.symmetry import (
    ETA_D2,
    charge_residual,
    params_rotation_residual,
    physical_rotation,
    rotation_residual,
)

SQUARE = LatticeGeometry.cubic(2, 4)


def _fock_amplitudes(state):
    return state.scalar * fock_build_bcs(state.dense()).amplitudes


def test_x_matrices_link_opposite_legs():
    X = x_matrices(3)
    assert X.shape == (3, 6, 6)
    assert X[0, 0, 2] == 1.0
    assert X[1, 1, 3] == 1.0
    assert X[2, 4, 5] == 1.0
    assert X.sum() == 3.0


def test_params_shape_validation(rng):
    params = random_params(SQUARE, 1, 1, 1, rng)
    assert params.translation_invariant
    assert params.t_sites().shape == (16, 1, 4, 1, 1)
    with pytest.raises(ValidationError):
        PepsParams(SQUARE, 1, 1, 0, np.zeros((1, 3, 1, 1)), np.zeros((1, 0, 4, 4, 1, 1)),
                   np.zeros((2, 1, 1)), np.zeros((2, 1, 1)))


def test_site_dependent_params_are_accepted():
    geom = LatticeGeometry.cubic(2, 2)
    t = np.zeros((4, 1, 4, 1, 1))
    t[2] = 1.0
    params = PepsParams(geom, 1, 1, 0, t, np.zeros((1, 0, 4, 4, 1, 1)), np.ones((2, 1, 1)), np.ones((2, 1, 1)))
    assert not params.translation_invariant
    joint = assemble_joint_pairing(params).dense()
    layout = params.layout
    psi = layout.position(ModeIndex.physical((1, 0)))
    c = layout.position(ModeIndex((1, 0), Species.C, 3, 0, 0))
    assert joint[psi, c] == 1.0
    assert joint[c, psi] == -1.0
    assert np.count_nonzero(joint) == 8


def test_bond_pairing_links_out_leg_to_neighbour_in_leg():
    W_C = np.array([0.5, 2.0]).reshape(2, 1, 1)
    params = PepsParams(SQUARE, 1, 1, 0, np.ones((1, 4, 1, 1)), np.zeros((1, 0, 4, 4, 1, 1)),
                        W_C, np.zeros((2, 1, 1)))
    bond = assemble_bond_pairing(params)
    modes = list(bond.modes)
    B = bond.dense()
    out = modes.index(ModeIndex((0, 0), Species.C, 1, 0, 0))
    into = modes.index(ModeIndex((1, 0), Species.C, 3, 0, 0))
    up = modes.index(ModeIndex((3, 2), Species.C, 2, 0, 0))
    wrap = modes.index(ModeIndex((3, 3), Species.C, 4, 0, 0))
    assert B[out, into] == 0.5j
    assert B[up, wrap] == 2.0j
    assert np.count_nonzero(B) == 2 * 2 * SQUARE.num_sites


@pytest.mark.parametrize("dim,n_s,n_c,n_d", [(2, 1, 1, 1), (2, 1, 2, 1), (3, 1, 1, 1), (3, 2, 1, 0)])
def test_contraction_matches_fock_on_single_site_cell(rng, dim, n_s, n_c, n_d):
    geom = LatticeGeometry(dim=dim, extent=(1,) * dim)
    params = random_params(geom, n_s, n_c, n_d, rng)
    state = contract(params, compute_scalar=True)
    np.testing.assert_allclose(_fock_amplitudes(state), fock_contract(params).amplitudes, atol=1e-10)


def test_contraction_matches_fock_on_plaquette(rng):
    params = random_params(LatticeGeometry.cubic(2, 2), 1, 1, 0, rng)
    state = contract(params, compute_scalar=True)
    reference = fock_contract(params)
    assert state.modes == reference.modes
    np.testing.assert_allclose(_fock_amplitudes(state), reference.amplitudes, atol=1e-10)


def test_symmetric_plaquette_matches_fock_with_d_modes(rng):
    params = random_symmetric_params("symmetric_d2", LatticeGeometry.cubic(2, 2), 1, 1, rng)
    assert params.n_d == 1
    state = contract(params, compute_scalar=True)
    reference = fock_contract(params)
    assert state.modes == reference.modes
    np.testing.assert_allclose(_fock_amplitudes(state), reference.amplitudes, atol=1e-10)


def test_fock_contraction_respects_live_mode_limit(rng):
    params = random_params(LatticeGeometry.cubic(2, 2), 1, 1, 0, rng)
    with pytest.raises(OracleSizeError):
        fock_contract(params, max_live=8)


def test_contracted_state_conserves_staggered_charge(rng):
    params = random_params(SQUARE, 1, 1, 1, rng)
    state = contract(params)
    assert state.num_modes == 16
    assert charge_residual(state, SQUARE) < 1e-12


def test_symmetric_d2_family_is_rotation_invariant(rng):
    params = random_symmetric_params("symmetric_d2", SQUARE, 1, 1, rng)
    rot = physical_rotation(SQUARE, "d2")
    joint_residual, bond_residual = params_rotation_residual(params, rot)
    assert joint_residual < 1e-12
    assert bond_residual < 1e-12
    assert rotation_residual(contract(params), rot) < 1e-10


def test_symmetric_d2_weights():
    params = symmetric_params_d2(SQUARE, 1, 1, [0.3], np.zeros((1, 1, 4)))
    assert params.W_C[1, 0, 0] == pytest.approx(np.conj(ETA_D2) ** 2)
    assert params.W_D[1, 0, 0] == pytest.approx(1j)
    np.testing.assert_allclose(params.t[0, :, 0, 0], 0.3)


def test_unconstrained_params_break_rotation_invariance(rng):
    params = random_params(SQUARE, 1, 1, 1, rng)
    assert rotation_residual(contract(params), physical_rotation(SQUARE, "d2")) > 1e-3


def test_staggered_d3_family_is_rotation_invariant(rng):
    geom = LatticeGeometry.cubic(3, 2)
    params = random_symmetric_params("symmetric_d3_staggered", geom, 1, 1, rng)
    state = contract(params)
    for axis in (1, 2, 3):
        rot = physical_rotation(geom, "staggered_d3", axis)
        assert max(params_rotation_residual(params, rot)) < 1e-12
        assert rotation_residual(state, rot) < 1e-10


def test_spinhalf_family_is_rotation_invariant(rng):
    geom = LatticeGeometry.cubic(3, 2)
    params = random_symmetric_params("symmetric_d3_spinhalf", geom, 1, 1, rng)
    assert params.layout.num_modes == 208
    state = contract(params)
    assert state.num_modes == 16
    for axis in (1, 2, 3):
        rot = physical_rotation(geom, "spinhalf", axis)
        assert max(params_rotation_residual(params, rot)) < 1e-12
        assert rotation_residual(state, rot) < 1e-10
    assert charge_residual(state, geom, n_s=2) < 1e-12


def test_build_family_dispatch(rng):
    assert family_pattern_size("symmetric_d2") == 4
    assert family_pattern_size("symmetric_d3_spinhalf") == 3
    with pytest.raises(ValidationError):
        build_family("symmetric_d4", SQUARE, 1, 1, [1.0], [])
    with pytest.raises(ValidationError):
        symmetric_params_d2(LatticeGeometry.cubic(3, 2), 1, 1, [1.0], [])


def test_exact_pairing_weight():
    eps, r, a = 0.1, 0.9, 1.0
    assert exact_pairing_weight(1, 3, eps, r, a) == pytest.approx(-(eps / (2 * a)) * r ** 2)
    assert exact_pairing_weight(2, 2, eps, r, a) == pytest.approx(-eps / 2)
    assert exact_pairing_weight(3, 1, eps, r, a) == 0.0


def test_check_epsilon():
    spec = staggered_d2_kspec(SQUARE, 0.5)
    assert check_epsilon(spec, 1.0, 20) == pytest.approx(0.05)
    with pytest.raises(PreconditionError):
        check_epsilon(spec, 1.0, 10)
    with pytest.raises(PreconditionError):
        check_epsilon(spec, -1.0, 10)
    with pytest.raises(PreconditionError):
        check_epsilon(spec, 1.0, 0)


def test_exact_construction_shapes():
    spec = staggered_d3_kspec(LatticeGeometry.cubic(3, 2), 1.0)
    params = exact_construction_params(spec, 0.2, 4, margin=2.0)
    assert (params.n_c, params.n_d) == (4, 3)
    assert params.t.shape == (4, 6, 1, 1)
    assert params.tau.shape == (4, 3, 6, 6, 1, 1)
    np.testing.assert_array_equal(params.W_D, spec.K)
    np.testing.assert_array_equal(params.tau[0], 0.0)


def test_single_step_construction_has_no_d_modes():
    spec = staggered_d2_kspec(SQUARE, 1.0)
    params = exact_construction_params(spec, 0.2, 1, margin=2.0)
    assert params.n_d == 0
    assert charge_residual(contract(params), SQUARE) < 1e-12


def test_exact_construction_reproduces_trotter_state():
    spec = staggered_d2_kspec(LatticeGeometry(dim=2, extent=(4, 2)), 0.5)
    beta, N = 0.6, 3
    state = contract(exact_construction_params(spec, beta, N, margin=2.0))
    reference = trotter_reference(spec, beta, N)
    assert fock_fidelity(fock_build_bcs(state.dense()), reference) == pytest.approx(1.0, abs=1e-10)


def test_trotter_reference_improves_with_beta():
    spec = staggered_d2_kspec(LatticeGeometry(dim=2, extent=(4, 2)), 1.0)
    _, ground = fock_ground_state(build_quadratic(spec))
    eps = 0.02
    infidelity = [1.0 - fock_fidelity(trotter_reference(spec, beta, int(round(beta / eps))), ground)
                  for beta in (0.5, 2.0, 4.0, 8.0)]
    # at fixed eps the curve flattens onto the Trotter floor
    assert all(value < infidelity[0] for value in infidelity[1:])
    assert all(b <= a + 1e-4 for a, b in zip(infidelity, infidelity[1:]))
    assert infidelity[-1] < 1e-3


@pytest.mark.slow
def test_exact_construction_approaches_ground_state():
    spec = staggered_d2_kspec(SQUARE, 1.0)
    ground = exact_ground(spec)
    values = [fidelity(contract(exact_construction_params(spec, 4.0, N, margin=1.2)), ground)
              for N in (8, 16, 32)]
    assert values[-1] > 0.99
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
