"""
This module provides test cases for the config module.
"""

import pytest

from stochrk import __version__
from stochrk.config import (ConfigError, apply_overrides, config_header, deep_merge,
                            default_config, load_config, parse_key_value)

verbose = False

def test_defaults():
    config = load_config(None)
    assert config == default_config()
    assert config['tableau'] == 'dopri5'
    assert config['n_levels'] == 11
    assert config['rtol'] == 1e-8

class TestKeyValue:

    def test_typed_values(self):
        text = "# run settings\n\nrtol = 1e-6\ntrajectories=250\nrenormalize = true\n" \
               "tableau = rk87\nhorizon = 2\n"
        settings = parse_key_value(text)
        assert settings == {'rtol': 1e-6, 'trajectories': 250, 'renormalize': True,
                            'tableau': 'rk87', 'horizon': 2.0}
        assert isinstance(settings['horizon'], float)

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match=r"run.cfg:2: unknown key 'tolerance'"):
            parse_key_value("rtol=1e-6\ntolerance=3\n", source='run.cfg')

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match=":1: expected key=value"):
            parse_key_value("rtol 1e-6\n")

    def test_wrong_type(self):
        with pytest.raises(ConfigError, match="'trajectories' must be of type int"):
            parse_key_value("trajectories = many\n")
        with pytest.raises(ConfigError, match="'rtol' must be of type float"):
            parse_key_value("rtol = small\n")

    def test_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("master_seed = 7\nchunks = 8\n")
        config = load_config(str(path))
        assert config['master_seed'] == 7
        assert config['chunks'] == 8
        assert config['horizon'] == 3.0

class TestYaml:

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("rtol: 1.0e-7\natol: 1e-9\nworkers: 4\n")
        config = load_config(str(path))
        assert config['rtol'] == 1e-7
        assert config['atol'] == 1e-9
        assert config['workers'] == 4

    def test_yaml_must_be_mapping(self, tmp_path):
        path = tmp_path / "run.yml"
        path.write_text("- rtol\n- atol\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(str(path))

    def test_yaml_unknown_key(self, tmp_path):
        path = tmp_path / "run.yml"
        path.write_text("seed: 3\n")
        with pytest.raises(ConfigError, match="unknown key 'seed'"):
            load_config(str(path))

def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="Config file not found"):
        load_config(str(tmp_path / "absent.cfg"))

def test_overrides():
    config = default_config()
    merged = apply_overrides(config, {'rtol': 1e-5, 'atol': None, 'trajectories': 3})
    assert merged['rtol'] == 1e-5
    assert merged['atol'] == config['atol']
    assert merged['trajectories'] == 3
    assert config['rtol'] == 1e-8
    with pytest.raises(ConfigError):
        apply_overrides(config, {'speed': 1})

def test_header():
    config = default_config()
    lines = config_header(config, {'command': 'example absorber'})
    assert lines[0] == f"# version={__version__}"
    assert lines[1] == "# command=example absorber"
    assert "# rtol=1e-08" in lines
    assert "# horizon=3.0" in lines
    assert not any(line.startswith("# workers=") for line in lines)
    keys = [line[2:].split('=')[0] for line in lines[2:]]
    assert keys == sorted(keys)
    other = dict(config, workers=8)
    assert config_header(other) == config_header(config)

def test_deep_merge():
    target = {'a': {'b': 1, 'c': 2}, 'd': 3}
    deep_merge(target, {'a': {'c': 5}, 'e': 6})
    assert target == {'a': {'b': 1, 'c': 5}, 'd': 3, 'e': 6}
