import numpy as np
import pytest

from apps.backend.core.covariance import pairing_to_covariance
from apps.backend.core.errors import StateFileError
from apps.backend.core.gaussian import PairingState
from apps.backend.core.lattice import LatticeGeometry, physical_modes
from apps.backend.core.state_files import read_state, write_state
from conftest import random_antisymmetric

PLAQUETTE = LatticeGeometry.cubic(2, 2)


def _state(rng, n_s=1, scalar=0.25 - 1.5j):
    return PairingState(random_antisymmetric(rng, PLAQUETTE.num_sites * n_s), physical_modes(PLAQUETTE, n_s), scalar)


@pytest.mark.parametrize("suffix", ["txt", "npz"])
def test_roundtrip_is_exact(tmp_path, rng, suffix):
    state = _state(rng)
    path = write_state(tmp_path / f"state.{suffix}", state, PLAQUETTE, model="staggered_d2")
    record = read_state(path)
    np.testing.assert_array_equal(record.state.dense(), state.dense())
    assert record.state.scalar == state.scalar
    assert record.state.modes == state.modes
    assert record.geom == PLAQUETTE
    assert record.model == "staggered_d2"
    assert record.covariance is None


@pytest.mark.parametrize("suffix", ["txt", "npz"])
def test_covariance_is_stored(tmp_path, rng, suffix):
    state = _state(rng, n_s=2)
    cov = pairing_to_covariance(state)
    path = write_state(tmp_path / f"state.{suffix}", state, PLAQUETTE, n_s=2, covariance=cov)
    record = read_state(path)
    assert record.n_s == 2
    np.testing.assert_array_equal(record.covariance.gamma, cov.gamma)


def test_text_header(tmp_path, rng):
    state = PairingState(random_antisymmetric(rng, 4), scalar=None)
    path = write_state(tmp_path / "state.txt", state, PLAQUETTE)
    header = [line for line in path.read_text().splitlines() if line.startswith("#")]
    assert "# format: gaussian-peps-state" in header
    assert "# scalar: none" in header
    assert "# extent: 2 2" in header
    assert read_state(path).state.scalar is None


def test_state_must_match_geometry(tmp_path, rng):
    with pytest.raises(StateFileError):
        write_state(tmp_path / "state.txt", PairingState(random_antisymmetric(rng, 3)), PLAQUETTE)


def test_missing_file(tmp_path):
    with pytest.raises(StateFileError):
        read_state(tmp_path / "absent.txt")


def test_wrong_format_name(tmp_path, rng):
    path = write_state(tmp_path / "state.txt", _state(rng), PLAQUETTE)
    path.write_text(path.read_text().replace("gaussian-peps-state", "other-state"))
    with pytest.raises(StateFileError):
        read_state(path)


def test_unsupported_version(tmp_path, rng):
    path = write_state(tmp_path / "state.txt", _state(rng), PLAQUETTE)
    path.write_text(path.read_text().replace("# version: 1", "# version: 7"))
    with pytest.raises(StateFileError):
        read_state(path)


def test_truncated_rows(tmp_path, rng):
    path = write_state(tmp_path / "state.txt", _state(rng), PLAQUETTE)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(StateFileError):
        read_state(path)
