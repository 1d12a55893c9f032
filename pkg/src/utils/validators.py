"""
Validation utilities for the entanglement rate toolkit.

This module validates the settings file and provides the field-addressed
helpers used when reading scenario and sweep documents.
"""

import math
from typing import Any, Dict, Iterable, List, Mapping

from model import ScenarioError

TIE_BREAKS = ("waterfill", "lexicographic", "equal_surplus")
RELAXATIONS = ("continuous", "integer")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def validate_settings(settings: Dict[str, Any]) -> bool:
    """
    Validate the merged settings dictionary.

    Args:
        settings: Settings dictionary (defaults merged with the YAML file)

    Returns:
        True if settings are valid, raises ValueError otherwise

    Raises:
        ValueError: If any section is invalid
    """
    errors = []

    solver = settings.get('solver', {})
    if not isinstance(solver, dict):
        errors.append("solver section must be a mapping")
    else:
        if solver.get('relaxation') not in RELAXATIONS:
            errors.append(f"solver.relaxation must be one of {', '.join(RELAXATIONS)}")
        if solver.get('tie_break') not in TIE_BREAKS:
            errors.append(f"solver.tie_break must be one of {', '.join(TIE_BREAKS)}")
        if not _is_positive(solver.get('tolerance')):
            errors.append("solver.tolerance must be a positive number")

    oracle = settings.get('oracle', {})
    if not isinstance(oracle, dict):
        errors.append("oracle section must be a mapping")
    else:
        if not _is_positive(oracle.get('grid_step_ebit_s')):
            errors.append("oracle.grid_step_ebit_s must be a positive number")
        for key in ('mc_trials', 'mc_block_size'):
            if not _is_positive_int(oracle.get(key)):
                errors.append(f"oracle.{key} must be a positive integer")
        if not isinstance(oracle.get('mc_seed'), int) or isinstance(oracle.get('mc_seed'), bool):
            errors.append("oracle.mc_seed must be an integer")
        if not _is_positive(oracle.get('mc_z_limit')):
            errors.append("oracle.mc_z_limit must be a positive number")

    sweeps = settings.get('sweeps', {})
    if not isinstance(sweeps, dict):
        errors.append("sweeps section must be a mapping")
    else:
        for key in ('randomized_runs', 'workers'):
            if not _is_positive_int(sweeps.get(key)):
                errors.append(f"sweeps.{key} must be a positive integer")

    logging_config = settings.get('logging', {})
    if not isinstance(logging_config, dict):
        errors.append("logging section must be a mapping")
    elif str(logging_config.get('level', '')).upper() not in LOG_LEVELS:
        errors.append(f"logging.level must be one of {', '.join(LOG_LEVELS)}")

    if errors:
        raise ValueError(f"Settings validation failed: {'; '.join(errors)}")

    return True


def _is_positive(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value) and value > 0


def _is_positive_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value > 0


def require_mapping(value: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise ScenarioError(path, f"must be a mapping, got {type(value).__name__}")
    return value


def require_list(value: Any, path: str) -> List[Any]:
    if not isinstance(value, list):
        raise ScenarioError(path, f"must be a list, got {type(value).__name__}")
    return value


def check_keys(mapping: Mapping[str, Any], required: Iterable[str], optional: Iterable[str], path: str) -> None:
    """Reject unknown keys and report the first missing required key."""
    required = list(required)
    allowed = set(required) | set(optional)
    unknown = sorted(str(key) for key in mapping if key not in allowed)
    if unknown:
        raise ScenarioError(f"{path}.{unknown[0]}", f"unknown key (allowed: {', '.join(sorted(allowed))})")
    for key in required:
        if key not in mapping:
            raise ScenarioError(f"{path}.{key}", "missing required field")


def parse_number(value: Any, path: str) -> float:
    """
    Read a real number.

    YAML 1.1 loads '1.2e9' (no dot before the exponent sign) as a string, so
    numeric strings are accepted.
    """
    if isinstance(value, bool) or value is None:
        raise ScenarioError(path, f"malformed number {value!r}")
    if isinstance(value, (int, float)):
        number = float(value)
    elif isinstance(value, str):
        try:
            number = float(value.strip())
        except ValueError:
            raise ScenarioError(path, f"malformed number {value!r}") from None
    else:
        raise ScenarioError(path, f"malformed number {value!r}")
    if not math.isfinite(number):
        raise ScenarioError(path, f"must be finite, got {value!r}")
    return number


def parse_int(value: Any, path: str) -> int:
    number = parse_number(value, path)
    if not number.is_integer():
        raise ScenarioError(path, f"must be an integer, got {value!r}")
    return int(number)


def parse_choice(value: Any, choices: Iterable[str], path: str) -> str:
    choices = tuple(choices)
    if value not in choices:
        raise ScenarioError(path, f"must be one of {', '.join(choices)}, got {value!r}")
    return value
