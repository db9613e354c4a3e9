"""
Configuration module.

This module provides functions for loading and managing run settings from
plain key=value files or YAML files, applying command line overrides and
rendering the effective settings as provenance header lines.

Functions:
    default_config: Default run settings
    load_config: Load settings from a key=value or YAML file
    parse_key_value: Parse key=value text into typed settings
    apply_overrides: Apply non-None overrides to a settings dictionary
    config_header: Render settings as '#' comment lines
    deep_merge: Recursively merge dictionaries

Dependencies:
    - pyyaml: Value typing and YAML parsing
"""

import os
import yaml
from typing import Dict, Any, Optional, List

from .constants import Constants

# settings that never change results; left out of provenance headers
EXECUTION_KEYS = ('workers',)

class ConfigError(ValueError):
    """Raised for malformed lines, unknown keys or wrongly typed values."""

def default_config() -> Dict[str, Any]:
    """
    Get default run settings.

    Returns:
        Dictionary containing default settings:
        - n_levels: Oscillator basis truncation
        - horizon, chunks: Integration horizon and number of base steps
        - rtol, atol: Step controller tolerances
        - trajectories, master_seed, workers: Ensemble settings
        - tableau: Builtin tableau name or path to a tableau file
        - renormalize: Renormalize wavefunctions after every accepted step
        - safety, max_rejects, k_max: Step controller limits
        - converge_horizon, mu, sigma, x0, h_max, levels, paths, fit_floor,
          fit_ceiling: Convergence harness settings
    """
    return {
        'n_levels': 11,
        'horizon': 3.0,
        'chunks': 64,
        'rtol': 1e-8,
        'atol': 1e-10,
        'trajectories': 100,
        'master_seed': 0,
        'workers': 1,
        'tableau': 'dopri5',
        'renormalize': False,
        'safety': 0.8,
        'max_rejects': 60,
        'k_max': 40,
        'converge_horizon': 1.0,
        'mu': 0.06,
        'sigma': 0.5,
        'x0': 1.0,
        'h_max': 0.0625,
        'levels': 6,
        'paths': 2000,
        'fit_floor': Constants.FIT_FLOOR,
        'fit_ceiling': 1e-3,
    }

def _coerce(key: str, value: Any, expected: Any, where: str) -> Any:
    """Coerce a parsed value to the type of its default."""
    if isinstance(expected, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(expected, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(expected, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        # yaml only resolves floats written with a decimal point
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
    elif isinstance(expected, str):
        if value is not None and not isinstance(value, (dict, list)):
            return str(value)
    raise ConfigError(f"{where}: value {value!r} for '{key}' must be of type "
                      f"{type(expected).__name__}")

def parse_key_value(text: str, source: str = '<string>') -> Dict[str, Any]:
    """
    Parse key=value lines into a typed settings dictionary.

    Blank lines and lines starting with '#' are ignored. Values are typed
    with yaml.safe_load and then coerced to the type of the default.

    Args:
        text: File contents
        source: Name used in error messages

    Returns:
        Dictionary of the settings found in the text

    Raises:
        ConfigError: If a line is malformed, a key is unknown or a value has
            the wrong type
    """
    defaults = default_config()
    settings = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got '{line}'")
        key, value = (part.strip() for part in line.split('=', 1))
        if key not in defaults:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        try:
            parsed = yaml.safe_load(value) if value else None
        except yaml.YAMLError as e:
            raise ConfigError(f"{source}:{lineno}: cannot parse value for '{key}': {e}")
        settings[key] = _coerce(key, parsed, defaults[key], f"{source}:{lineno}")
    return settings

def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load run settings from a key=value or YAML file.

    Args:
        config_path: Optional path to the settings file. Files ending in
                    '.yml' or '.yaml' are read as a YAML mapping, anything
                    else as key=value lines. If None, the defaults are
                    returned.

    Returns:
        Dictionary containing settings merged with defaults.

    Raises:
        FileNotFoundError: If config file doesn't exist
        ConfigError: If the file content is invalid
        PermissionError: If config file exists but can't be read
    """
    config = default_config()
    if config_path is None:
        return config

    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Config file not found: {config_path}")

    try:
        with open(config_path, 'r') as f:
            text = f.read()
    except PermissionError as e:
        raise PermissionError(f"Permission denied when reading config file {config_path}: {e}")

    if config_path.endswith(('.yml', '.yaml')):
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"Error parsing config file {config_path}: {e}")
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config file {config_path} must contain a mapping")
        defaults = default_config()
        settings = {}
        for key, value in loaded.items():
            if key not in defaults:
                raise ConfigError(f"{config_path}: unknown key '{key}'")
            settings[key] = _coerce(key, value, defaults[key], config_path)
    else:
        settings = parse_key_value(text, source=config_path)

    deep_merge(config, settings)
    return config

def apply_overrides(config: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    Return a copy of config with every non-None override applied.

    Args:
        config: Settings dictionary
        overrides: Values from command line flags, None meaning 'not given'

    Returns:
        New settings dictionary

    Raises:
        ConfigError: If an override names an unknown key
    """
    merged = dict(config)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in merged:
            raise ConfigError(f"unknown override '{key}'")
        merged[key] = _coerce(key, value, merged[key], 'command line')
    return merged

def config_header(config: Dict[str, Any], extra: Optional[Dict[str, Any]] = None) -> List[str]:
    """
    Render settings as '#' comment lines, sorted by key.

    Execution settings such as the worker count are left out so that the
    header depends only on what determines the results.

    Args:
        config: Effective settings
        extra: Additional provenance entries (version, subcommand, ...)

    Returns:
        List of header lines without trailing newlines
    """
    from . import __version__

    entries = {'version': __version__}
    if extra:
        entries.update(extra)
    lines = [f"# {key}={value}" for key, value in entries.items()]
    lines += [f"# {key}={config[key]!r}" if isinstance(config[key], float)
              else f"# {key}={config[key]}" for key in sorted(config) if key not in EXECUTION_KEYS]
    return lines

def deep_merge(target: Dict[str, Any], source: Dict[str, Any]) -> None:
    """
    Recursively merge source dictionary into target dictionary.

    Args:
        target: The dictionary to merge into
        source: The dictionary to merge from
    """
    for key, value in source.items():
        if key in target and isinstance(target[key], dict) and isinstance(value, dict):
            deep_merge(target[key], value)
        else:
            target[key] = value
