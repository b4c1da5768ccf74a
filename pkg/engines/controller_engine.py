"""
ATTACK CONTROLLER — Collapse / recover state machine
======================================================
Monitoring ──AttackStart──▶ UnderAttack ──horizon elapsed──▶ Monitoring

Rules, evaluated in order for every transaction of a card:
  1. UnderAttack and the recovery horizon elapsed → reset the window, back to
     Monitoring (reason RECOVERED), then continue with the rules below.
  2. Monitoring + AttackStart → collapse the window, Block, UnderAttack.
  3. UnderAttack → Block; allowlisted MCC with amount ≤ cap → LimitAmount(cap).
  4. Monitoring + Uncertain → blocklisted MCC: LimitAmount(cap) (or Block);
     otherwise StepUpAuth on the first Uncertain of an episode, DataEnrichment
     on repeats.
  5. Monitoring + Normal → UpperOutlier: Block (or LimitAmount); inlier: Allow;
     warming window: Allow with WARMUP.
  6. Accepted outcomes (Allow, Flag, LimitAmount) feed the window; the caller
     feeds the profile.
"""
from __future__ import annotations

import logging
from datetime import datetime, timedelta
from typing import Optional, Tuple

from modules.config import EngineConfig
from modules.errors import RejectedInput
from modules.models import (
    ACCEPTED_ACTIONS, Action, ControllerState, Decision, Intensity, Mode, Reason,
    ScoreCard, Transaction, WindowState,
)
from modules.risk_checker import factor_reasons
from engines import window_engine

logger = logging.getLogger(__name__)


def new_controller(card_id: str) -> ControllerState:
    return ControllerState(card_id=card_id)


def _recovery_due(cstate: ControllerState, cfg: EngineConfig, now: datetime) -> bool:
    if cstate.recovery_deadline is not None and now >= cstate.recovery_deadline:
        return True
    return bool(cfg.recovery_txns) and cstate.txns_since_attack >= cfg.recovery_txns


def _cents(value: Optional[float]) -> Optional[int]:
    return None if value is None else int(round(value))


def step(
    cstate: ControllerState,
    wstate: WindowState,
    card: ScoreCard,
    txn: Transaction,
    cfg: EngineConfig,
    now: datetime,
) -> Tuple[ControllerState, WindowState, Decision]:
    if not (cstate.card_id == wstate.card_id == txn.card_id):
        raise RejectedInput(
            f"state mismatch: controller={cstate.card_id} window={wstate.card_id} txn={txn.card_id}"
        )

    reasons: list[Reason] = []
    cap: Optional[int] = None

    # 1. recovery
    if cstate.mode == Mode.UNDER_ATTACK and _recovery_due(cstate, cfg, now):
        wstate = window_engine.reset(wstate)
        cstate = ControllerState(card_id=cstate.card_id)
        reasons.append(Reason.RECOVERED)
        logger.debug(f"[controller] {txn.card_id} recovered at seq {txn.seq_no}")

    # 2. attack start
    view = None
    if cstate.mode == Mode.MONITORING and card.intensity == Intensity.ATTACK_START:
        wstate = window_engine.collapse(wstate)
        cstate = ControllerState(
            card_id=cstate.card_id,
            mode=Mode.UNDER_ATTACK,
            attack_started_at=now,
            recovery_deadline=now + timedelta(minutes=cfg.recovery_minutes),
        )
        action = Action.BLOCK
        reasons.append(Reason.ATTACK_START)
        reasons.extend(factor_reasons(card))
        view = (0.0, 0.0, 0.0)
        logger.debug(f"[controller] {txn.card_id} attack start at seq {txn.seq_no} (score {card.total})")

    # 3. under attack
    elif cstate.mode == Mode.UNDER_ATTACK:
        view = (0.0, 0.0, 0.0)
        reasons.append(Reason.UNDER_ATTACK)
        if txn.mcc in cfg.mcc_allowlist and txn.amount <= cfg.small_amount_cap:
            action = Action.LIMIT_AMOUNT
            cap = cfg.small_amount_cap
            reasons.append(Reason.ALLOWLISTED_MCC)
            # only accepted transactions count toward the recovery horizon
            cstate = cstate.model_copy(update={"txns_since_attack": cstate.txns_since_attack + 1})
        else:
            action = Action.BLOCK
            if txn.amount > 0:
                reasons.append(Reason.UPPER_OUTLIER)

    # 4. uncertainty
    elif card.intensity == Intensity.UNCERTAIN:
        view = window_engine.window_view(wstate)
        streak = cstate.uncertain_streak + 1
        cstate = cstate.model_copy(update={"uncertain_streak": streak})
        reasons.append(Reason.UNCERTAIN_SCORE)
        if txn.mcc in cfg.mcc_blocklist:
            reasons.append(Reason.BLOCKLISTED_MCC)
            if cfg.blocklist_action == "block":
                action = Action.BLOCK
            else:
                action = Action.LIMIT_AMOUNT
                cap = cfg.small_amount_cap
        else:
            action = Action.STEP_UP_AUTH if streak == 1 else Action.DATA_ENRICHMENT
        reasons.extend(factor_reasons(card))

    # 5. normal
    else:
        if cstate.uncertain_streak:
            cstate = cstate.model_copy(update={"uncertain_streak": 0})
        view = window_engine.window_view(wstate)
        if view is None:
            action = Action.ALLOW
            reasons.append(Reason.WARMUP)
        else:
            _, lo, hi = view
            if txn.amount > hi:
                reasons.append(Reason.UPPER_OUTLIER)
                if cfg.outlier_action == "limit":
                    action = Action.LIMIT_AMOUNT
                    cap = cfg.small_amount_cap
                else:
                    action = Action.BLOCK
            elif cfg.flag_lower_outliers and lo > 0 and txn.amount < lo:
                action = Action.FLAG
                reasons.append(Reason.LOWER_OUTLIER)
            else:
                action = Action.ALLOW

    # 6. accepted outcomes feed the window
    if action in ACCEPTED_ACTIONS:
        authorized = min(txn.amount, cap) if cap is not None else txn.amount
        wstate = window_engine.observe(wstate, authorized)

    # the interval the transaction was judged against, not the updated one
    mean, lo, hi = view if view is not None else (None, None, None)
    decision = Decision(
        card_id=txn.card_id,
        seq_no=txn.seq_no,
        action=action,
        cap=cap,
        reasons=tuple(reasons),
        score_total=card.total,
        intensity=card.intensity,
        window_mean=_cents(mean),
        interval_lo=_cents(lo),
        interval_hi=_cents(hi),
        mode_after=cstate.mode,
    )
    return cstate, wstate, decision
