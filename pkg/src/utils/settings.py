"""
Settings loader.

Reads config/solver_config.yaml (or a file given with --config), merges it
over the built-in defaults and validates the result.
"""

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from .validators import validate_settings

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent.parent / "config" / "solver_config.yaml"

DEFAULTS: Dict[str, Any] = {
    "solver": {"relaxation": "continuous", "tolerance": 1e-9, "tie_break": "waterfill"},
    "oracle": {
        "grid_step_ebit_s": 1e7,
        "mc_trials": 100000,
        "mc_seed": 7,
        "mc_block_size": 4096,
        "mc_z_limit": 3.5,
    },
    "sweeps": {"randomized_runs": 1000, "workers": 1},
    "logging": {"level": "INFO", "log_dir": None},
}


@dataclass(frozen=True)
class Settings:
    solver: Dict[str, Any]
    oracle: Dict[str, Any]
    sweeps: Dict[str, Any]
    logging: Dict[str, Any]


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(path: Optional[Union[str, Path]] = None) -> Settings:
    """
    Load settings from YAML.

    Args:
        path: Settings file; the shipped config/solver_config.yaml when omitted

    Returns:
        Validated Settings

    Raises:
        ValueError: If the file is not a mapping or a value is invalid
    """
    config_path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    raw: Dict[str, Any] = {}
    if config_path.is_file():
        with open(config_path, 'r', encoding='utf-8') as handle:
            raw = yaml.safe_load(handle) or {}
    elif path is not None:
        raise ValueError(f"Settings file not found: {config_path}")

    if not isinstance(raw, dict):
        raise ValueError(f"Settings file {config_path} must contain a mapping")

    merged = _merge(DEFAULTS, raw)
    unknown = sorted(set(merged) - set(DEFAULTS))
    if unknown:
        raise ValueError(f"Settings validation failed: unknown section(s) {', '.join(unknown)}")
    validate_settings(merged)
    return Settings(**merged)
