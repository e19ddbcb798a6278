import numpy as np
import pytest

from apps.backend.core.errors import GeometryError, ValidationError
from apps.backend.core.fock import fock_build_bcs, fock_fidelity, fock_ground_state
from apps.backend.core.gaussian import energy_variance, ground_energy, ground_state_pairing
from apps.backend.core.hamiltonians import (
    KSpec,
    build_model,
    build_quadratic,
    dirac_matrices,
    exact_ground,
    hamiltonian_residual,
    naive_dirac_hamiltonian,
    naive_kspec,
    naive_particle_hole_data,
    odd_sites,
    particle_hole_transform,
    restrict_hamiltonian,
    staggered_d2_kspec,
    staggered_d3_kspec,
    susskind_d2_hamiltonian,
    susskind_particle_hole_data,
    translate_hamiltonian,
)
from apps.backend.core.lattice import LatticeGeometry, ModeIndex

SQUARE = LatticeGeometry.cubic(2, 4)
CUBE = LatticeGeometry.cubic(3, 4)


def test_staggered_d3_signs():
    spec = staggered_d3_kspec(CUBE, 0.5)
    assert spec.K_at((0, 0, 1), 2)[0, 0] == -1j
    assert spec.K_at((1, 0, 1), 3)[0, 0] == -1.0
    assert spec.K_at((1, 1, 0), 3)[0, 0] == 1.0
    assert spec.K_at((3, 2, 1), 1)[0, 0] == 1.0


def test_dirac_matrix_identities():
    dirac = dirac_matrices()
    for i in range(3):
        np.testing.assert_allclose(dirac.alpha[i] @ dirac.alpha[i], np.eye(4))
        np.testing.assert_allclose(dirac.alpha[i] @ dirac.beta + dirac.beta @ dirac.alpha[i], 0.0)
        np.testing.assert_allclose(dirac.J[i], dirac.J[i].T)


def test_kform_blocks():
    m = 0.5
    H = build_quadratic(staggered_d2_kspec(SQUARE, m))
    assert H.modes[0] == ModeIndex.physical((0, 0))
    np.testing.assert_allclose(H.hopping, m * np.eye(16))
    s, right, up = SQUARE.site_index((0, 0)), SQUARE.site_index((1, 0)), SQUARE.site_index((0, 1))
    assert H.pairing[s, right] == pytest.approx(-0.5j)
    assert H.pairing[s, up] == pytest.approx(0.5)
    np.testing.assert_allclose(H.pairing, -H.pairing.T)


def test_spacing_scales_coupling():
    geom = LatticeGeometry(dim=2, extent=(4, 4), spacing=0.5)
    H = build_quadratic(staggered_d2_kspec(geom, 1.0))
    assert H.pairing[0, geom.site_index((1, 0))] == pytest.approx(-1j)


def test_extent_two_hopping_cancels():
    geom = LatticeGeometry(dim=2, extent=(2, 2))
    H = build_quadratic(staggered_d2_kspec(geom, 1.0))
    np.testing.assert_allclose(H.pairing, 0.0)


def test_susskind_particle_hole_gives_kform():
    m = 0.7
    H = particle_hole_transform(susskind_d2_hamiltonian(SQUARE, m), SQUARE, *susskind_particle_hole_data())
    assert hamiltonian_residual(H, build_quadratic(staggered_d2_kspec(SQUARE, m))) < 1e-12
    assert H.constant == pytest.approx(-0.5 * m * SQUARE.num_sites)


def test_naive_particle_hole_decouples_components():
    H = particle_hole_transform(naive_dirac_hamiltonian(CUBE, 0.5), CUBE, *naive_particle_hole_data())
    upper = np.tile([True, True, False, False], CUBE.num_sites)
    for block in (H.hopping, H.pairing):
        np.testing.assert_allclose(block[np.ix_(upper, ~upper)], 0.0, atol=1e-12)
    assert not restrict_hamiltonian(H, np.flatnonzero(upper)).conserves_number


def test_particle_hole_requires_unitary_spin_matrix():
    with pytest.raises(ValidationError):
        particle_hole_transform(susskind_d2_hamiltonian(SQUARE, 1.0), SQUARE, odd_sites, np.array([[2.0]]))


def test_translation_invariance():
    H2 = build_quadratic(staggered_d2_kspec(SQUARE, 1.0))
    assert hamiltonian_residual(translate_hamiltonian(H2, SQUARE, 1, axis=1), H2) < 1e-14

    H3 = build_quadratic(staggered_d3_kspec(CUBE, 1.0))
    assert hamiltonian_residual(translate_hamiltonian(H3, CUBE, 1, axis=3, step=2), H3) < 1e-14
    assert hamiltonian_residual(translate_hamiltonian(H3, CUBE, 1, axis=3), H3) > 0.1


def test_ground_state_matches_oracle_on_small_lattice():
    geom = LatticeGeometry(dim=2, extent=(4, 2))
    H = build_quadratic(staggered_d2_kspec(geom, 0.5))
    energy, vector = fock_ground_state(H)
    state = ground_state_pairing(H)
    assert ground_energy(H) == pytest.approx(energy, abs=1e-10)
    assert fock_fidelity(fock_build_bcs(state.T), vector) == pytest.approx(1.0, abs=1e-10)


def test_exact_ground_is_eigenstate():
    spec = naive_kspec(LatticeGeometry.cubic(3, 2), 0.8)
    state = exact_ground(spec)
    assert state.num_modes == 16
    assert energy_variance(build_quadratic(spec), state) < 1e-10


def test_build_model_dispatch():
    assert build_model("naive_lower", CUBE, 1.0).name == "naive_lower"
    custom = build_model("custom_K", SQUARE, 1.0, custom_K=np.array([[[1.0]], [[1j]]]))
    H = build_quadratic(custom)
    assert hamiltonian_residual(H, build_quadratic(staggered_d2_kspec(SQUARE, 1.0))) == 0.0
    with pytest.raises(ValidationError):
        build_model("wilson", SQUARE, 1.0)
    with pytest.raises(ValidationError):
        build_model("custom_K", SQUARE, 1.0)


def test_model_dimension_mismatch():
    with pytest.raises(GeometryError):
        staggered_d2_kspec(CUBE, 1.0)
    with pytest.raises(GeometryError):
        naive_kspec(SQUARE, 1.0)


def test_kspec_validation():
    with pytest.raises(ValidationError):
        KSpec(SQUARE, 1, np.ones((16, 2, 1, 1)), m=0.0)
    with pytest.raises(ValidationError):
        KSpec(SQUARE, 1, np.ones((16, 3, 1, 1)), m=1.0)
