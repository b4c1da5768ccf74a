"""
CONFIGURATION - Engine parameters, score table and MCC lists
======================================================================
The configuration is a flat dotenv document (KEY=value). Defaults ship in
config/defaults.env; every key can be overridden by ATTACKGUARD_<KEY> in the
environment. Currency keys are written in dollars and held as cents.
"""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Callable, Dict, Literal, Mapping, Optional, Tuple

from dotenv import dotenv_values
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .models import ErrorFlag, dollars_to_cents, format_dollars

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config" / "defaults.env"
ENV_PREFIX = "ATTACKGUARD_"

# ══════════════════════════════════════════════════════════════════════════════
# MCC LISTS
# ══════════════════════════════════════════════════════════════════════════════
# Business areas traditionally tied to fraud: money transfer, quasi-cash
# (cryptocurrency), stored value, gambling, direct marketing.
HIGH_RISK_MCCS: Dict[int, int] = {
    4829: 3,  # wire transfer / money orders
    6051: 3,  # quasi-cash, cryptocurrency
    6540: 3,  # stored value card load
    7995: 3,  # betting, casino gambling
    7801: 3,  # internet gambling
    5966: 3,  # direct marketing, outbound telemarketing
    5967: 3,  # direct marketing, inbound teleservices
}

MCC_BLOCKLIST_BASE = frozenset({4829, 6051, 6540, 7995, 7801})

# Rarely associated with fraud; processed (capped) even during an attack.
MCC_ALLOWLIST_BASE = frozenset({
    5411,  # grocery stores
    5499,  # misc food stores
    5541,  # service stations
    5912,  # drug stores
    4111,  # commuter transport
    5814,  # fast food
})

DEFAULT_ERROR_SCORES: Dict[ErrorFlag, int] = {
    ErrorFlag.BAD_CVV: 3,
    ErrorFlag.BAD_PIN: 3,
    ErrorFlag.BAD_ZIP: 2,
    ErrorFlag.INSUFFICIENT_BALANCE: 2,
    ErrorFlag.TECHNICAL_GLITCH: 2,
    ErrorFlag.BAD_EXPIRATION: 1,
    ErrorFlag.BAD_CARD_NUMBER: 1,
    ErrorFlag.OTHER: 1,
}


# ══════════════════════════════════════════════════════════════════════════════
# MODELS
# ══════════════════════════════════════════════════════════════════════════════
class ScoreTable(BaseModel):
    """Per-factor risk scores. All scores are small nonnegative integers."""
    model_config = ConfigDict(frozen=True)

    gap_tiers: Tuple[Tuple[int, int], ...] = ((60, 3), (300, 2), (900, 1))
    mcc_risk: Dict[int, int] = Field(default_factory=lambda: dict(HIGH_RISK_MCCS))
    mcc_risk_default: int = Field(0, ge=0)
    night_hours: frozenset[int] = frozenset(range(0, 6))
    night_score: int = Field(2, ge=0)
    unusualness_cutoff: float = Field(0.9, ge=0.0, le=1.0)
    unusualness_score: int = Field(1, ge=0)
    geo_mismatch_score: int = Field(2, ge=0)
    error_scores: Dict[ErrorFlag, int] = Field(default_factory=lambda: dict(DEFAULT_ERROR_SCORES))

    @field_validator("gap_tiers")
    @classmethod
    def tiers_sorted(cls, v):
        gaps = [g for g, _ in v]
        if gaps != sorted(gaps) or len(set(gaps)) != len(gaps):
            raise ValueError("gap tiers must be sorted by strictly ascending max gap")
        if any(g < 0 or s < 0 for g, s in v):
            raise ValueError("gap tiers must be nonnegative")
        return v

    @field_validator("mcc_risk", "error_scores")
    @classmethod
    def scores_nonnegative(cls, v):
        if any(s < 0 for s in v.values()):
            raise ValueError("scores must be nonnegative")
        return v

    @field_validator("night_hours")
    @classmethod
    def hours_in_day(cls, v):
        if any(not 0 <= h <= 23 for h in v):
            raise ValueError("hours must be within 0..23")
        return v

    @classmethod
    def zero(cls) -> "ScoreTable":
        """A table that scores every factor 0."""
        return cls(
            gap_tiers=(), mcc_risk={}, night_hours=frozenset(), night_score=0,
            unusualness_score=0, geo_mismatch_score=0, error_scores={},
        )


class EngineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    window_size: int = Field(20, ge=1)
    forgetting_factor: float = Field(0.9, gt=0.0, le=1.0)
    interval_multiplier: float = Field(3.0, gt=0.0)
    std_floor_rel: float = Field(0.1, ge=0.0)
    std_floor_abs: int = Field(100, ge=0)  # cents
    window_warmup: int = Field(3, ge=1)
    score_table: ScoreTable = Field(default_factory=ScoreTable)
    soft_threshold: int = Field(5, gt=0)
    hard_threshold: int = 10
    recovery_minutes: int = Field(30, gt=0)
    recovery_txns: int = Field(10, ge=0)  # 0 disables the count horizon
    small_amount_cap: int = Field(5000, ge=0)  # cents
    mcc_blocklist: frozenset[int] = MCC_BLOCKLIST_BASE
    mcc_allowlist: frozenset[int] = MCC_ALLOWLIST_BASE
    familiar_mcc_min: int = Field(3, ge=1)
    profile_warmup_txns: int = Field(5, ge=0)
    blocklist_action: Literal["limit", "block"] = "limit"
    outlier_action: Literal["block", "limit"] = "block"
    flag_lower_outliers: bool = False
    timezone: str = "UTC"

    @field_validator("timezone")
    @classmethod
    def known_timezone(cls, v: str) -> str:
        if not v:
            raise ValueError("timezone must not be empty")
        try:
            pd.Timestamp("2000-01-01", tz=v)
        except (KeyError, ValueError, TypeError):
            raise ValueError(f"unknown timezone {v!r}") from None
        return v

    @model_validator(mode="after")
    def thresholds_ordered(self):
        if self.hard_threshold <= self.soft_threshold:
            raise ValueError("hard_threshold must exceed soft_threshold")
        return self


# ══════════════════════════════════════════════════════════════════════════════
# DOTENV KEY MAP
# ══════════════════════════════════════════════════════════════════════════════
def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_set(text: str) -> frozenset[int]:
    return frozenset(int(x) for x in text.split(",") if x.strip())


def _parse_pairs(text: str) -> list[tuple[str, str]]:
    pairs = []
    for item in text.split(","):
        if not item.strip():
            continue
        k, sep, v = item.partition(":")
        if not sep:
            raise ValueError(f"expected key:value, got {item!r}")
        pairs.append((k.strip(), v.strip()))
    return pairs


def _parse_hours(text: str) -> frozenset[int]:
    hours: set[int] = set()
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        lo, sep, hi = item.partition("-")
        if sep:
            hours.update(range(int(lo), int(hi) + 1))
        else:
            hours.add(int(lo))
    return frozenset(hours)


def _parse_tiers(text: str):
    return tuple((int(k), int(v)) for k, v in _parse_pairs(text))


def _parse_mcc_map(text: str):
    return {int(k): int(v) for k, v in _parse_pairs(text)}


def _parse_error_map(text: str):
    return {ErrorFlag(k): int(v) for k, v in _parse_pairs(text)}


# key → (target model, field, parser)
_KEYS: Dict[str, Tuple[str, str, Callable[[str], object]]] = {
    "WINDOW_SIZE":         ("engine", "window_size", int),
    "FORGETTING_FACTOR":   ("engine", "forgetting_factor", float),
    "INTERVAL_MULTIPLIER": ("engine", "interval_multiplier", float),
    "STD_FLOOR_REL":       ("engine", "std_floor_rel", float),
    "STD_FLOOR_ABS":       ("engine", "std_floor_abs", dollars_to_cents),
    "WINDOW_WARMUP":       ("engine", "window_warmup", int),
    "SOFT_THRESHOLD":      ("engine", "soft_threshold", int),
    "HARD_THRESHOLD":      ("engine", "hard_threshold", int),
    "RECOVERY_MINUTES":    ("engine", "recovery_minutes", int),
    "RECOVERY_TXNS":       ("engine", "recovery_txns", int),
    "SMALL_AMOUNT_CAP":    ("engine", "small_amount_cap", dollars_to_cents),
    "MCC_BLOCKLIST":       ("engine", "mcc_blocklist", _parse_int_set),
    "MCC_ALLOWLIST":       ("engine", "mcc_allowlist", _parse_int_set),
    "FAMILIAR_MCC_MIN":    ("engine", "familiar_mcc_min", int),
    "PROFILE_WARMUP_TXNS": ("engine", "profile_warmup_txns", int),
    "BLOCKLIST_ACTION":    ("engine", "blocklist_action", str.strip),
    "OUTLIER_ACTION":      ("engine", "outlier_action", str.strip),
    "FLAG_LOWER_OUTLIERS": ("engine", "flag_lower_outliers", _parse_bool),
    "TIMEZONE":            ("engine", "timezone", str.strip),
    "GAP_TIERS":           ("table", "gap_tiers", _parse_tiers),
    "MCC_RISK":            ("table", "mcc_risk", _parse_mcc_map),
    "MCC_RISK_DEFAULT":    ("table", "mcc_risk_default", int),
    "NIGHT_HOURS":         ("table", "night_hours", _parse_hours),
    "NIGHT_SCORE":         ("table", "night_score", int),
    "UNUSUALNESS_CUTOFF":  ("table", "unusualness_cutoff", float),
    "UNUSUALNESS_SCORE":   ("table", "unusualness_score", int),
    "GEO_MISMATCH_SCORE":  ("table", "geo_mismatch_score", int),
    "ERROR_SCORES":        ("table", "error_scores", _parse_error_map),
}
_FIELD_TO_KEY = {(target, fname): key for key, (target, fname, _) in _KEYS.items()}


def config_from_mapping(values: Mapping[str, Optional[str]]) -> EngineConfig:
    """Build an EngineConfig from KEY → text pairs. Missing keys take model defaults."""
    engine_kwargs: Dict[str, object] = {}
    table_kwargs: Dict[str, object] = {}
    for key, raw in values.items():
        if key not in _KEYS:
            raise ConfigError("unknown configuration key", key)
        if raw is None:
            raise ConfigError("key present without a value", key)
        target, fname, parser = _KEYS[key]
        try:
            parsed = parser(raw)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"invalid value {raw!r} ({e})", key) from e
        (engine_kwargs if target == "engine" else table_kwargs)[fname] = parsed

    try:
        table = ScoreTable(**table_kwargs)
    except ValidationError as e:
        raise ConfigError(_first_message(e), _key_for(e, "table")) from e
    try:
        return EngineConfig(score_table=table, **engine_kwargs)
    except ValidationError as e:
        raise ConfigError(_first_message(e), _key_for(e, "engine")) from e


def _first_message(e: ValidationError) -> str:
    err = e.errors()[0]
    return err.get("msg", str(e))


def _key_for(e: ValidationError, target: str) -> str:
    loc = e.errors()[0].get("loc", ())
    if loc and (target, loc[0]) in _FIELD_TO_KEY:
        return _FIELD_TO_KEY[(target, loc[0])]
    # model-level validators (e.g. soft/hard ordering) carry no field location
    return "HARD_THRESHOLD" if target == "engine" else "SCORE_TABLE"


def load_config(path: Optional[str | Path] = None, environ: Optional[Mapping[str, str]] = None) -> EngineConfig:
    """
    Load the dotenv config file (defaults.env when path is None) and apply
    ATTACKGUARD_<KEY> environment overrides.
    """
    path = Path(path) if path else DEFAULT_CONFIG_PATH
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")

    values: Dict[str, Optional[str]] = dict(dotenv_values(path))
    env = os.environ if environ is None else environ
    for key in _KEYS:
        override = env.get(ENV_PREFIX + key)
        if override is not None:
            logger.info(f"[config] {key} overridden from environment")
            values[key] = override

    cfg = config_from_mapping(values)
    logger.debug(f"[config] loaded {len(values)} keys from {path}")
    return cfg


def dump_config(cfg: EngineConfig) -> str:
    """Render cfg as a dotenv document that load_config reads back to an equal config."""
    t = cfg.score_table
    lines = [
        f"WINDOW_SIZE={cfg.window_size}",
        f"FORGETTING_FACTOR={cfg.forgetting_factor!r}",
        f"INTERVAL_MULTIPLIER={cfg.interval_multiplier!r}",
        f"STD_FLOOR_REL={cfg.std_floor_rel!r}",
        f"STD_FLOOR_ABS={format_dollars(cfg.std_floor_abs)}",
        f"WINDOW_WARMUP={cfg.window_warmup}",
        f"SOFT_THRESHOLD={cfg.soft_threshold}",
        f"HARD_THRESHOLD={cfg.hard_threshold}",
        f"RECOVERY_MINUTES={cfg.recovery_minutes}",
        f"RECOVERY_TXNS={cfg.recovery_txns}",
        f"SMALL_AMOUNT_CAP={format_dollars(cfg.small_amount_cap)}",
        f"MCC_BLOCKLIST={','.join(str(m) for m in sorted(cfg.mcc_blocklist))}",
        f"MCC_ALLOWLIST={','.join(str(m) for m in sorted(cfg.mcc_allowlist))}",
        f"FAMILIAR_MCC_MIN={cfg.familiar_mcc_min}",
        f"PROFILE_WARMUP_TXNS={cfg.profile_warmup_txns}",
        f"BLOCKLIST_ACTION={cfg.blocklist_action}",
        f"OUTLIER_ACTION={cfg.outlier_action}",
        f"FLAG_LOWER_OUTLIERS={str(cfg.flag_lower_outliers).lower()}",
        f"TIMEZONE={cfg.timezone}",
        f"GAP_TIERS={','.join(f'{g}:{s}' for g, s in t.gap_tiers)}",
        f"MCC_RISK={','.join(f'{m}:{s}' for m, s in sorted(t.mcc_risk.items()))}",
        f"MCC_RISK_DEFAULT={t.mcc_risk_default}",
        f"NIGHT_HOURS={','.join(str(h) for h in sorted(t.night_hours))}",
        f"NIGHT_SCORE={t.night_score}",
        f"UNUSUALNESS_CUTOFF={t.unusualness_cutoff!r}",
        f"UNUSUALNESS_SCORE={t.unusualness_score}",
        f"GEO_MISMATCH_SCORE={t.geo_mismatch_score}",
        f"ERROR_SCORES={','.join(f'{k.value}:{v}' for k, v in t.error_scores.items())}",
    ]
    return "\n".join(lines) + "\n"
