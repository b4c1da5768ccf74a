"""
Risk Checker — Fraud-attack intensity scoring
===============================================
The intensity of fraudulent activity around a transaction is the SUM of
small integer scores over five factors:

  - gap       → inter-transaction time gap (high transaction rates)
  - mcc       → business areas traditionally tied to fraud
  - time      → night hours and hours the cardholder rarely uses
  - location  → merchant state differs from the cardholder's modal state
  - errors    → CVV/PIN/zip errors, glitches, insufficient balance ...

Three intensity tiers, by total against the configured thresholds:
  - 'AttackStart' → total ≥ hard_threshold
  - 'Uncertain'   → soft_threshold ≤ total < hard_threshold
  - 'Normal'      → otherwise
"""
from __future__ import annotations

import logging
from datetime import datetime
from typing import Iterable, Optional

from .errors import RejectedInput
from .config import ScoreTable
from .models import (
    ONLINE_STATE, CardholderProfile, ErrorFlag, Intensity, Reason, ScoreCard, Transaction,
)
from .profile import hour_unusualness, profile_in_warmup

logger = logging.getLogger(__name__)


# ══════════════════════════════════════════════════════════════════════════════
# FACTOR SCORES
# ══════════════════════════════════════════════════════════════════════════════
def score_gap(prev_time: Optional[datetime], now: datetime, table: ScoreTable) -> int:
    """Score of the first tier whose max gap covers now - prev_time; 0 without history."""
    if prev_time is None:
        return 0
    gap = (now - prev_time).total_seconds()
    if gap < 0:
        logger.warning(f"[risk_checker] time went backwards ({prev_time} → {now}); scoring as gap 0")
        gap = 0.0
    for max_gap, score in table.gap_tiers:
        if gap <= max_gap:
            return score
    return 0


def score_mcc(mcc: int, table: ScoreTable) -> int:
    if not 0 <= mcc <= 9999:
        raise RejectedInput(f"mcc must be within 0..9999, got {mcc}")
    return table.mcc_risk.get(mcc, table.mcc_risk_default)


def score_time(hour: int, profile: CardholderProfile, table: ScoreTable, warmup_txns: int = 5) -> int:
    score = table.night_score if hour in table.night_hours else 0
    if hour_unusualness(profile, hour) >= table.unusualness_cutoff:
        score += table.unusualness_score
    if profile_in_warmup(profile, warmup_txns):
        score //= 2
    return score


def score_location(txn: Transaction, profile: CardholderProfile, table: ScoreTable, warmup_txns: int = 5) -> int:
    """
    geo_mismatch_score when the merchant state differs from the modal state.
    ONLINE is neutral on its own: every online purchase carries it.
    """
    state = txn.merchant_state
    if profile.modal_state is None or state == ONLINE_STATE or state == profile.modal_state:
        return 0
    score = table.geo_mismatch_score
    if profile_in_warmup(profile, warmup_txns):
        score //= 2
    return score


def score_errors(errors: Iterable[ErrorFlag], table: ScoreTable) -> int:
    return sum(table.error_scores.get(flag, 0) for flag in set(errors))


# ══════════════════════════════════════════════════════════════════════════════
# TOTAL
# ══════════════════════════════════════════════════════════════════════════════
def classify_intensity(total: int, soft: int, hard: int) -> Intensity:
    if total >= hard:
        return Intensity.ATTACK_START
    if total >= soft:
        return Intensity.UNCERTAIN
    return Intensity.NORMAL


def total_score(
    txn: Transaction,
    prev_time: Optional[datetime],
    profile: CardholderProfile,
    table: ScoreTable,
    soft: int,
    hard: int,
    warmup_txns: int = 5,
) -> ScoreCard:
    if not 0 < soft < hard:
        raise RejectedInput(f"thresholds must satisfy 0 < soft < hard, got soft={soft} hard={hard}")
    gap = score_gap(prev_time, txn.timestamp, table)
    mcc = score_mcc(txn.mcc, table)
    tod = score_time(txn.timestamp.hour, profile, table, warmup_txns)
    loc = score_location(txn, profile, table, warmup_txns)
    err = score_errors(txn.errors, table)
    total = gap + mcc + tod + loc + err
    return ScoreCard(
        gap_score=gap,
        mcc_score=mcc,
        time_score=tod,
        location_score=loc,
        error_score=err,
        total=total,
        intensity=classify_intensity(total, soft, hard),
    )


def factor_reasons(card: ScoreCard) -> list[Reason]:
    """Reason codes for every factor that contributed to the total, in factor order."""
    reasons = []
    if card.gap_score:
        reasons.append(Reason.SMALL_GAP)
    if card.mcc_score:
        reasons.append(Reason.HIGH_RISK_MCC)
    if card.time_score:
        reasons.append(Reason.UNUSUAL_TIME)
    if card.location_score:
        reasons.append(Reason.LOCATION_MISMATCH)
    if card.error_score:
        reasons.append(Reason.ERROR_FLAGS)
    return reasons
