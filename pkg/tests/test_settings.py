import logging

import pytest

from model import ScenarioError
from utils.logger import get_logger, log_execution_time, setup_logger
from utils.settings import DEFAULTS, load_settings
from utils.validators import check_keys, parse_choice, parse_int, parse_number


def _write(tmp_path, text):
    path = tmp_path / "settings.yaml"
    path.write_text(text, encoding="utf-8")
    return path


def test_shipped_settings_match_defaults():
    settings = load_settings()
    assert settings.solver == DEFAULTS["solver"]
    assert settings.oracle["mc_z_limit"] == 3.5
    assert settings.sweeps["randomized_runs"] == 1000


def test_partial_file_is_merged_over_defaults(tmp_path):
    settings = load_settings(_write(tmp_path, "solver:\n  tie_break: equal_surplus\n"))
    assert settings.solver["tie_break"] == "equal_surplus"
    assert settings.solver["tolerance"] == 1e-9
    assert settings.oracle == DEFAULTS["oracle"]


def test_empty_file_gives_defaults(tmp_path):
    assert load_settings(_write(tmp_path, "")).sweeps == DEFAULTS["sweeps"]


@pytest.mark.parametrize("text", [
    "solver:\n  tie_break: coin_flip\n",
    "solver:\n  tolerance: -1\n",
    "oracle:\n  mc_trials: 0\n",
    "oracle:\n  mc_seed: true\n",
    "sweeps:\n  workers: 1.5\n",
    "logging:\n  level: LOUD\n",
    "solver: fast\n",
])
def test_invalid_values_are_rejected(tmp_path, text):
    with pytest.raises(ValueError, match="Settings validation failed"):
        load_settings(_write(tmp_path, text))


def test_unknown_section_is_rejected(tmp_path):
    with pytest.raises(ValueError, match="plotting"):
        load_settings(_write(tmp_path, "plotting:\n  dpi: 300\n"))


def test_non_mapping_file_is_rejected(tmp_path):
    with pytest.raises(ValueError, match="mapping"):
        load_settings(_write(tmp_path, "- solver\n"))


def test_missing_explicit_file_is_an_error(tmp_path):
    with pytest.raises(ValueError, match="not found"):
        load_settings(tmp_path / "absent.yaml")


def test_parse_number_accepts_yaml_exponent_strings():
    assert parse_number("1.2e9", "x") == 1.2e9
    assert parse_number(3, "x") == 3.0
    for bad in (True, None, "fast", float("nan"), [1]):
        with pytest.raises(ScenarioError) as error:
            parse_number(bad, "user[0].weight")
        assert error.value.field == "user[0].weight"


def test_parse_int_and_choice():
    assert parse_int("35", "node.memory_capacity") == 35
    assert parse_int(35.0, "node.memory_capacity") == 35
    with pytest.raises(ScenarioError, match="integer"):
        parse_int(35.5, "node.memory_capacity")
    assert parse_choice("decibel", ("natural", "decibel"), "mode") == "decibel"
    with pytest.raises(ScenarioError):
        parse_choice("linear", ("natural", "decibel"), "mode")


def test_check_keys_reports_unknown_before_missing():
    with pytest.raises(ScenarioError) as error:
        check_keys({"b": 1, "zeta": 2}, ("a", "b"), (), "node")
    assert error.value.field == "node.zeta"
    with pytest.raises(ScenarioError) as error:
        check_keys({"b": 1}, ("a", "b"), (), "node")
    assert error.value.field == "node.a"
    check_keys({"a": 1, "c": 2}, ("a",), ("c",), "node")


def test_setup_logger_writes_to_log_dir_and_routes_modules(tmp_path):
    logger = setup_logger(level="DEBUG", log_dir=tmp_path)
    assert logger is get_logger()
    assert len(logger.handlers) == 3
    assert logging.getLogger("solver").handlers == logger.handlers
    assert (tmp_path / "entangle_rates.log").exists()

    setup_logger(level="WARNING", log_dir=tmp_path)
    assert len(logger.handlers) == 3
    assert logger.level == logging.WARNING


def test_log_execution_time_reraises(tmp_path):
    setup_logger(level="WARNING", log_dir=tmp_path)

    @log_execution_time
    def explode():
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError, match="boom"):
        explode()
    assert "explode failed" in (tmp_path / "entangle_rates_error.log").read_text(encoding="utf-8")
