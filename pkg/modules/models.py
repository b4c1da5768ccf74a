"""
Pydantic Models for the Fraud-Attack Engine
Transactions, per-card state records and the decisions emitted for them.

Money is carried as integer cents everywhere; the helpers at the top convert
to and from the "$57.40" / "57.40" text forms used at the boundaries.
"""
from __future__ import annotations

import re
from datetime import datetime
from decimal import Decimal, InvalidOperation
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str(self.value)

        def __format__(self, spec: str) -> str:
            return str.__format__(str(self.value), spec)
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

_DOLLARS_RE = re.compile(r"^\$?(\d+)(?:\.(\d{1,2}))?$")


def parse_dollars(text: str) -> int:
    """'$57.40' or '57.40' → 5740. Raises ValueError on anything else."""
    m = _DOLLARS_RE.match(text.strip())
    if not m:
        raise ValueError(f"not a dollar amount: {text!r}")
    whole, frac = m.group(1), (m.group(2) or "0")
    return int(whole) * 100 + int(frac.ljust(2, "0"))


def format_dollars(cents: int) -> str:
    """5740 → '57.40'"""
    sign = "-" if cents < 0 else ""
    cents = abs(cents)
    return f"{sign}{cents // 100}.{cents % 100:02d}"


def dollars_to_cents(value) -> int:
    """Accepts 50, 50.0, '50.00', Decimal('50') → 5000 (exact for 2-decimal inputs)."""
    try:
        return int((Decimal(str(value)) * 100).to_integral_value())
    except InvalidOperation as e:
        raise ValueError(f"not a currency value: {value!r}") from e


# ══════════════════════════════════════════════════════════════════════════════
# ENUMS
# ══════════════════════════════════════════════════════════════════════════════
class Channel(StrEnum):
    CHIP = "Chip"
    SWIPE = "Swipe"
    ONLINE = "Online"


class ErrorFlag(StrEnum):
    BAD_CVV = "BadCVV"
    BAD_PIN = "BadPIN"
    BAD_ZIP = "BadZip"
    INSUFFICIENT_BALANCE = "InsufficientBalance"
    TECHNICAL_GLITCH = "TechnicalGlitch"
    BAD_EXPIRATION = "BadExpiration"
    BAD_CARD_NUMBER = "BadCardNumber"
    OTHER = "Other"  # unknown error text, preserved in Transaction.unknown_errors


class Intensity(StrEnum):
    NORMAL = "Normal"
    UNCERTAIN = "Uncertain"
    ATTACK_START = "AttackStart"


class Verdict(StrEnum):
    INLIER = "Inlier"
    UPPER_OUTLIER = "UpperOutlier"


class Mode(StrEnum):
    MONITORING = "Monitoring"
    UNDER_ATTACK = "UnderAttack"
    RECOVERING = "Recovering"


class Action(StrEnum):
    ALLOW = "Allow"
    FLAG = "Flag"
    BLOCK = "Block"
    LIMIT_AMOUNT = "LimitAmount"
    STEP_UP_AUTH = "StepUpAuth"
    DATA_ENRICHMENT = "DataEnrichment"


class Reason(StrEnum):
    UPPER_OUTLIER = "UPPER_OUTLIER"
    LOWER_OUTLIER = "LOWER_OUTLIER"
    ATTACK_START = "ATTACK_START"
    UNDER_ATTACK = "UNDER_ATTACK"
    HIGH_RISK_MCC = "HIGH_RISK_MCC"
    ALLOWLISTED_MCC = "ALLOWLISTED_MCC"
    BLOCKLISTED_MCC = "BLOCKLISTED_MCC"
    UNCERTAIN_SCORE = "UNCERTAIN_SCORE"
    SMALL_GAP = "SMALL_GAP"
    UNUSUAL_TIME = "UNUSUAL_TIME"
    LOCATION_MISMATCH = "LOCATION_MISMATCH"
    ERROR_FLAGS = "ERROR_FLAGS"
    RECOVERED = "RECOVERED"
    WARMUP = "WARMUP"


# Outcomes that authorize (part of) the amount; only these update window/profile.
ACCEPTED_ACTIONS = frozenset({Action.ALLOW, Action.FLAG, Action.LIMIT_AMOUNT})
# Outcomes that count as a positive (fraud) prediction in evaluation.
POSITIVE_ACTIONS = frozenset({
    Action.BLOCK, Action.LIMIT_AMOUNT, Action.STEP_UP_AUTH, Action.DATA_ENRICHMENT, Action.FLAG,
})
ONLINE_STATE = "ONLINE"


# ══════════════════════════════════════════════════════════════════════════════
# TRANSACTION
# ══════════════════════════════════════════════════════════════════════════════
class Transaction(BaseModel):
    """One card event. amount is in cents."""
    model_config = ConfigDict(frozen=True)

    card_id: str = Field(..., min_length=1)
    seq_no: int = Field(..., ge=0)
    timestamp: datetime
    amount: int = Field(..., ge=0)
    mcc: int = Field(..., ge=0, le=9999)
    merchant_name: str = ""
    merchant_city: str = ""
    merchant_state: str = ""
    zip: Optional[str] = None
    channel: Channel = Channel.SWIPE
    errors: frozenset[ErrorFlag] = frozenset()
    unknown_errors: tuple[str, ...] = ()
    fraud_label: Optional[bool] = None

    @field_validator("timestamp")
    @classmethod
    def minute_resolution(cls, v: datetime) -> datetime:
        return v.replace(second=0, microsecond=0)

    @field_validator("zip")
    @classmethod
    def five_digit_zip(cls, v: Optional[str]) -> Optional[str]:
        if v is None or v == "":
            return None
        if not (len(v) == 5 and v.isdigit()):
            raise ValueError(f"zip must be 5 digits, got {v!r}")
        return v

    @property
    def hour(self) -> int:
        return self.timestamp.hour


# ══════════════════════════════════════════════════════════════════════════════
# PER-CARD STATE
# ══════════════════════════════════════════════════════════════════════════════
class CardholderProfile(BaseModel):
    """Behavioural profile built from accepted transactions only."""
    card_id: str
    active_hour_hist: tuple[int, ...] = (0,) * 24
    state_counts: dict[str, int] = Field(default_factory=dict)
    mcc_counts: dict[int, int] = Field(default_factory=dict)
    modal_state: Optional[str] = None
    familiar_mccs: frozenset[int] = frozenset()
    last_txn_time: Optional[datetime] = None
    txn_count: int = Field(0, ge=0)

    @model_validator(mode="after")
    def hist_matches_count(self):
        if len(self.active_hour_hist) != 24:
            raise ValueError("active_hour_hist must have 24 bins")
        if sum(self.active_hour_hist) != self.txn_count:
            raise ValueError("active_hour_hist must sum to txn_count")
        return self


class WindowSnapshot(BaseModel):
    """Pre-attack buffer captured at collapse. m, s and the interval are recomputed from it on reset."""
    amounts: tuple[int, ...] = ()


class WindowState(BaseModel):
    """
    Sliding window of accepted amounts (cents, oldest → newest) with
    exponential forgetting. Statistics are computed from `amounts` on demand.
    """
    card_id: str
    amounts: tuple[int, ...] = ()
    window_size: int = Field(20, ge=1)
    forgetting_factor: float = Field(0.9, gt=0.0, le=1.0)
    interval_multiplier: float = Field(3.0, gt=0.0)
    std_floor_rel: float = Field(0.1, ge=0.0)
    std_floor_abs: float = Field(100.0, ge=0.0)  # cents
    warmup: int = Field(3, ge=1)
    collapsed: bool = False
    snapshot: Optional[WindowSnapshot] = None

    @model_validator(mode="after")
    def collapse_consistency(self):
        if len(self.amounts) > self.window_size:
            raise ValueError("buffer longer than window_size")
        if self.collapsed != (self.snapshot is not None):
            raise ValueError("collapsed must be true exactly when a snapshot is present")
        return self


class ScoreCard(BaseModel):
    gap_score: int = Field(0, ge=0)
    mcc_score: int = Field(0, ge=0)
    time_score: int = Field(0, ge=0)
    location_score: int = Field(0, ge=0)
    error_score: int = Field(0, ge=0)
    total: int = 0
    intensity: Intensity = Intensity.NORMAL


class ControllerState(BaseModel):
    card_id: str
    mode: Mode = Mode.MONITORING
    attack_started_at: Optional[datetime] = None
    txns_since_attack: int = Field(0, ge=0)
    recovery_deadline: Optional[datetime] = None
    uncertain_streak: int = Field(0, ge=0)

    @model_validator(mode="after")
    def mode_fields(self):
        attack_fields = self.attack_started_at is not None or self.recovery_deadline is not None
        if self.mode == Mode.MONITORING and (attack_fields or self.txns_since_attack):
            raise ValueError("Monitoring state must not carry attack fields")
        if (self.recovery_deadline is not None) != (self.mode == Mode.UNDER_ATTACK):
            raise ValueError("recovery_deadline is present exactly while UnderAttack")
        return self


# ══════════════════════════════════════════════════════════════════════════════
# DECISION
# ══════════════════════════════════════════════════════════════════════════════
_RESTRICTIVE = frozenset({Action.BLOCK, Action.LIMIT_AMOUNT, Action.STEP_UP_AUTH, Action.DATA_ENRICHMENT})


class Decision(BaseModel):
    """
    Engine verdict for one transaction. Field order is the JSONL key order.
    Money fields are cents in memory and dollar strings on the wire.
    """
    model_config = ConfigDict(frozen=True)

    card_id: str
    seq_no: int
    action: Action
    cap: Optional[int] = None
    reasons: tuple[Reason, ...] = ()
    score_total: int = 0
    intensity: Intensity = Intensity.NORMAL
    window_mean: Optional[int] = None
    interval_lo: Optional[int] = None
    interval_hi: Optional[int] = None
    mode_after: Mode = Mode.MONITORING

    @field_validator("cap", "window_mean", "interval_lo", "interval_hi", mode="before")
    @classmethod
    def _from_dollar_text(cls, v):
        if isinstance(v, str):
            return parse_dollars(v)
        return v

    @field_serializer("cap", "window_mean", "interval_lo", "interval_hi")
    def _to_dollar_text(self, v: Optional[int]) -> Optional[str]:
        return None if v is None else format_dollars(v)

    @model_validator(mode="after")
    def restrictive_needs_reason(self):
        if self.action in _RESTRICTIVE and not self.reasons:
            raise ValueError(f"{self.action} decision needs at least one reason code")
        if (self.action == Action.LIMIT_AMOUNT) != (self.cap is not None):
            raise ValueError("cap is set exactly for LimitAmount decisions")
        return self
