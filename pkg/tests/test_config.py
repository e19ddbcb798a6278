from pathlib import Path

import pytest

from apps.backend.core.config import (
    ExperimentConfig,
    apply_overrides,
    config_hash,
    load_config,
    parse_config,
)
from apps.backend.core.errors import ConfigError

EXPERIMENTS = sorted((Path(__file__).parent.parent / "config" / "experiments").glob("*.yaml"))


def test_experiment_configs_exist():
    assert len(EXPERIMENTS) >= 10


@pytest.mark.parametrize("path", EXPERIMENTS, ids=lambda p: p.stem)
def test_experiment_configs_parse(path):
    config = load_config(path)
    assert config.name == path.stem
    assert config.geometry.to_geometry().dim == config.geometry.dim


def test_defaults():
    config = ExperimentConfig()
    assert config.model == "staggered_d2"
    assert config.geometry.extent_tuple() == (4, 4)
    assert config.n_s == 1
    assert config.output.state_format == "txt"


def test_complex_coefficients():
    config = load_config(Path(__file__).parent.parent / "config" / "experiments" / "build_symmetric_d2.yaml")
    assert config.coefficients.z[0][0] == [0.1 + 0.2j, 0.05, -0.1j, 0.3]
    assert config.coefficients.model_dump(mode="json")["z"][0][0][2] == [0.0, -0.1]


def test_spinhalf_models_have_two_spin_modes():
    config = parse_config({"model": "naive_upper", "geometry": {"dim": 3, "extent": 2}})
    assert config.n_s == 2


@pytest.mark.parametrize("data", [
    {"seed": -1},
    {"model": "wilson"},
    {"model": "staggered_d3"},
    {"geometry": {"dim": 2, "extent": 3}},
    {"geometry": {"dim": 3, "extent": [4, 4]}},
    {"m": 0.0},
    {"n_values": [8, 8]},
    {"model": "custom_K"},
    {"family": "symmetric_d3_staggered"},
    {"family": "exact_construction", "beta": 4.0, "N": 4},
    {"workers": 0},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    listed = tmp_path / "list.yaml"
    listed.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(listed)


def test_empty_file_gives_defaults(tmp_path):
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    assert load_config(empty) == ExperimentConfig()


def test_overrides():
    config = apply_overrides(ExperimentConfig(), tolerances=["rotation=1e-6", " charge = 0.5"],
                             seed=9, workers=3, out_dir="elsewhere")
    assert config.tolerances.rotation == 1e-6
    assert config.tolerances.charge == 0.5
    assert (config.seed, config.workers, config.output.dir) == (9, 3, "elsewhere")


@pytest.mark.parametrize("item", ["rotation", "speed=1", "rotation=fast", "rotation=-1"])
def test_bad_tolerance_overrides(item):
    with pytest.raises(ConfigError):
        apply_overrides(ExperimentConfig(), tolerances=[item])


def test_config_hash_is_reproducible():
    config = ExperimentConfig()
    assert config_hash(config) == config_hash(ExperimentConfig())
    assert config_hash(config) != config_hash(apply_overrides(config, seed=1))
    assert len(config_hash(config)) == 64
