"""
Evaluation — decisions vs. fraud labels
=========================================
Confusion counts, attack-level latency and the money view of a run.

A positive prediction is any non-Allow action. Fraud transactions of a card
are grouped into attacks: a new attack starts after more than an hour
without fraud on that card.
"""
from __future__ import annotations

import logging
from typing import List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel, Field, field_serializer, field_validator

from modules.errors import RejectedInput
from modules.models import (
    POSITIVE_ACTIONS, Action, Decision, Reason, Transaction, format_dollars, parse_dollars,
)

logger = logging.getLogger(__name__)

ATTACK_SPLIT = pd.Timedelta(hours=1)


class EvalReport(BaseModel):
    n_transactions: int = 0
    n_fraud: int = 0
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    precision: float = Field(1.0, ge=0.0, le=1.0)
    recall: float = Field(1.0, ge=0.0, le=1.0)
    false_positive_rate: float = Field(0.0, ge=0.0, le=1.0)
    zero_positives: bool = False
    zero_fraud: bool = False
    n_attacks: int = 0
    attacks_missed: int = 0
    detection_latency: Optional[float] = None
    post_detection_block_rate: float = Field(1.0, ge=0.0, le=1.0)
    loss_prevented: int = 0  # cents
    loss_incurred: int = 0   # cents

    @field_validator("loss_prevented", "loss_incurred", mode="before")
    @classmethod
    def _from_dollar_text(cls, v):
        return parse_dollars(v) if isinstance(v, str) else v

    @field_serializer("loss_prevented", "loss_incurred")
    def _to_dollar_text(self, v: int) -> str:
        return format_dollars(v)


def authorized_amount(decision: Decision, amount: int) -> int:
    """Cents the issuer lets through for this decision."""
    if decision.action in (Action.ALLOW, Action.FLAG):
        return amount
    if decision.action == Action.LIMIT_AMOUNT:
        return min(amount, decision.cap or 0)
    return 0


def _aligned_frame(decisions: Sequence[Decision], stream: Sequence[Transaction]) -> pd.DataFrame:
    if len(decisions) != len(stream):
        raise RejectedInput(f"{len(decisions)} decisions for {len(stream)} transactions")
    for i, (d, t) in enumerate(zip(decisions, stream)):
        if (d.card_id, d.seq_no) != (t.card_id, t.seq_no):
            raise RejectedInput(
                f"decision {i} is for {d.card_id}#{d.seq_no}, transaction is {t.card_id}#{t.seq_no}"
            )
        if t.fraud_label is None:
            raise RejectedInput(f"transaction {t.card_id}#{t.seq_no} carries no fraud label")

    return pd.DataFrame({
        "card_id": [t.card_id for t in stream],
        "seq_no": [t.seq_no for t in stream],
        "timestamp": pd.to_datetime([t.timestamp for t in stream]),
        "amount": [t.amount for t in stream],
        "fraud": [bool(t.fraud_label) for t in stream],
        "action": [d.action.value for d in decisions],
        "positive": [d.action in POSITIVE_ACTIONS for d in decisions],
        "attack_start": [Reason.ATTACK_START in d.reasons for d in decisions],
        "authorized": [authorized_amount(d, t.amount) for d, t in zip(decisions, stream)],
    })


def _attack_view(df: pd.DataFrame) -> pd.DataFrame:
    """Fraud rows with an attack id and the 0-based index inside the attack."""
    fraud = df[df["fraud"]].sort_values(["card_id", "seq_no"], kind="mergesort").copy()
    if fraud.empty:
        fraud["attack"] = pd.Series(dtype="int64")
        fraud["idx"] = pd.Series(dtype="int64")
        return fraud
    new_card = fraud["card_id"].ne(fraud["card_id"].shift())
    long_gap = fraud.groupby("card_id")["timestamp"].diff() > ATTACK_SPLIT
    fraud["attack"] = (new_card | long_gap).cumsum()
    fraud["idx"] = fraud.groupby("attack").cumcount()
    return fraud


def evaluate(decisions: Sequence[Decision], stream: Sequence[Transaction]) -> EvalReport:
    df = _aligned_frame(decisions, stream)
    if df.empty:
        return EvalReport(zero_positives=True, zero_fraud=True)

    fraud, pos = df["fraud"], df["positive"]
    tp = int((fraud & pos).sum())
    fp = int((~fraud & pos).sum())
    tn = int((~fraud & ~pos).sum())
    fn = int((fraud & ~pos).sum())

    zero_positives = tp + fp == 0
    zero_fraud = tp + fn == 0
    precision = 1.0 if zero_positives else tp / (tp + fp)
    recall = 1.0 if zero_fraud else tp / (tp + fn)
    fpr = 0.0 if fp + tn == 0 else fp / (fp + tn)

    attacks = _attack_view(df)
    n_attacks = int(attacks["attack"].nunique()) if not attacks.empty else 0
    hits = attacks[attacks["action"].eq(Action.BLOCK.value) | attacks["attack_start"]]
    detected_at = hits.groupby("attack")["idx"].min()
    latency = float(detected_at.mean()) if len(detected_at) else None

    after = attacks.join(detected_at.rename("detected_at"), on="attack", how="inner")
    after = after[after["idx"] > after["detected_at"]]
    contained = after["action"].isin([Action.BLOCK.value, Action.LIMIT_AMOUNT.value])
    block_rate = float(contained.mean()) if len(after) else 1.0

    attempted = int(df.loc[fraud, "amount"].sum())
    incurred = int(df.loc[fraud, "authorized"].sum())

    report = EvalReport(
        n_transactions=len(df),
        n_fraud=int(fraud.sum()),
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision=precision,
        recall=recall,
        false_positive_rate=fpr,
        zero_positives=zero_positives,
        zero_fraud=zero_fraud,
        n_attacks=n_attacks,
        attacks_missed=n_attacks - len(detected_at),
        detection_latency=latency,
        post_detection_block_rate=block_rate,
        loss_prevented=attempted - incurred,
        loss_incurred=incurred,
    )
    logger.info(
        f"[lab] precision={precision:.3f} recall={recall:.3f} fpr={fpr:.4f} "
        f"attacks={n_attacks} missed={report.attacks_missed}"
    )
    return report


# ══════════════════════════════════════════════════════════════════════════════
# PLOT DATA
# ══════════════════════════════════════════════════════════════════════════════
PLOT_COLUMNS = ["seq_no", "amount", "weighted_mean", "lo", "hi", "action", "fraud_label"]


def plot_frame(decisions: Sequence[Decision], stream: Sequence[Transaction], card_id: str) -> pd.DataFrame:
    """One card's amounts next to the interval each was judged against (dollar text)."""
    if len(decisions) != len(stream):
        raise RejectedInput(f"{len(decisions)} decisions for {len(stream)} transactions")

    def _money(v: Optional[int]) -> str:
        return "" if v is None else format_dollars(v)

    rows: List[dict] = []
    for d, t in zip(decisions, stream):
        if t.card_id != card_id:
            continue
        if (d.card_id, d.seq_no) != (t.card_id, t.seq_no):
            raise RejectedInput(f"decision {d.card_id}#{d.seq_no} does not match {t.card_id}#{t.seq_no}")
        rows.append({
            "seq_no": t.seq_no,
            "amount": format_dollars(t.amount),
            "weighted_mean": _money(d.window_mean),
            "lo": _money(d.interval_lo),
            "hi": _money(d.interval_hi),
            "action": d.action.value,
            "fraud_label": "" if t.fraud_label is None else ("Yes" if t.fraud_label else "No"),
        })
    if not rows:
        raise RejectedInput(f"no transactions for card {card_id}")
    return pd.DataFrame(rows, columns=PLOT_COLUMNS)
