from __future__ import annotations

import pytest

from modules.config import (
    DEFAULT_CONFIG_PATH, EngineConfig, ScoreTable, config_from_mapping, dump_config, load_config,
)
from modules.errors import ConfigError
from modules.models import ErrorFlag


def test_shipped_defaults_equal_model_defaults() -> None:
    assert DEFAULT_CONFIG_PATH.exists()
    assert load_config(environ={}) == EngineConfig()


def test_default_values() -> None:
    cfg = load_config(environ={})
    assert cfg.window_size == 20
    assert cfg.forgetting_factor == 0.9
    assert cfg.interval_multiplier == 3.0
    assert cfg.std_floor_abs == 100
    assert cfg.small_amount_cap == 5000
    assert (cfg.soft_threshold, cfg.hard_threshold) == (5, 10)
    t = cfg.score_table
    assert t.gap_tiers == ((60, 3), (300, 2), (900, 1))
    assert t.night_hours == frozenset(range(6))
    assert t.error_scores[ErrorFlag.BAD_CVV] == 3
    assert t.mcc_risk[6051] == 3


def test_environment_override() -> None:
    cfg = load_config(environ={"ATTACKGUARD_WINDOW_SIZE": "7", "ATTACKGUARD_SMALL_AMOUNT_CAP": "25.50"})
    assert cfg.window_size == 7
    assert cfg.small_amount_cap == 2550


def test_unknown_key_names_the_key() -> None:
    with pytest.raises(ConfigError) as exc:
        config_from_mapping({"WINDOW_SIZ": "20"})
    assert exc.value.key == "WINDOW_SIZ"


def test_invalid_value_names_the_key() -> None:
    with pytest.raises(ConfigError) as exc:
        config_from_mapping({"FORGETTING_FACTOR": "lots"})
    assert exc.value.key == "FORGETTING_FACTOR"

    with pytest.raises(ConfigError) as exc:
        config_from_mapping({"FORGETTING_FACTOR": "1.5"})
    assert exc.value.key == "FORGETTING_FACTOR"

    with pytest.raises(ConfigError) as exc:
        config_from_mapping({"GAP_TIERS": "300:2,60:3"})
    assert exc.value.key == "GAP_TIERS"


def test_timezone_must_be_known() -> None:
    assert config_from_mapping({"TIMEZONE": "America/New_York"}).timezone == "America/New_York"
    with pytest.raises(ConfigError) as exc:
        config_from_mapping({"TIMEZONE": "Mars/Olympus_Mons"})
    assert exc.value.key == "TIMEZONE"


def test_thresholds_must_be_ordered() -> None:
    with pytest.raises(ConfigError) as exc:
        config_from_mapping({"SOFT_THRESHOLD": "8", "HARD_THRESHOLD": "8"})
    assert exc.value.key == "HARD_THRESHOLD"
    assert exc.value.to_dict()["key"] == "HARD_THRESHOLD"


def test_missing_file(tmp_path) -> None:
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.env", environ={})


def test_dump_reads_back_equal(tmp_path) -> None:
    cfg = EngineConfig(
        window_size=12, forgetting_factor=0.8, outlier_action="limit", flag_lower_outliers=True,
        score_table=ScoreTable(night_hours=frozenset({0, 1, 2, 23}), geo_mismatch_score=3),
    )
    path = tmp_path / "cfg.env"
    path.write_text(dump_config(cfg), encoding="utf-8")
    assert load_config(path, environ={}) == cfg


def test_night_hour_ranges() -> None:
    cfg = config_from_mapping({"NIGHT_HOURS": "22-23,0-4"})
    assert cfg.score_table.night_hours == frozenset({22, 23, 0, 1, 2, 3, 4})


def test_module_header() -> None:
    import modules.config as config_module
    assert config_module.__doc__.strip().splitlines()[0] == "CONFIGURATION - Engine parameters, score table and MCC lists"
