from __future__ import annotations

from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Optional

import pytest

from modules.config import EngineConfig, ScoreTable
from modules.models import Channel, ErrorFlag, Transaction, WindowState

ROOT = Path(__file__).resolve().parent.parent
PRESETS = ROOT / "presets"
SCENARIO = PRESETS / "scenario_two_attacks"

T0 = datetime(2019, 3, 4, 12, 0)


def txn(
    *,
    amount: int = 2500,
    card_id: str = "u1c0",
    seq_no: int = 0,
    at: Optional[datetime] = None,
    mcc: int = 5411,
    state: str = "CA",
    channel: Channel = Channel.SWIPE,
    errors: Iterable[ErrorFlag] = (),
    fraud: Optional[bool] = None,
) -> Transaction:
    return Transaction(
        card_id=card_id,
        seq_no=seq_no,
        timestamp=at or T0,
        amount=amount,
        mcc=mcc,
        merchant_name=f"{mcc}-{state}",
        merchant_city="Los Angeles",
        merchant_state=state,
        zip="90001",
        channel=channel,
        errors=frozenset(errors),
        fraud_label=fraud,
    )


def daily_txns(amounts: Iterable[int], card_id: str = "u1c0", start: datetime = T0, **kw) -> list[Transaction]:
    """One transaction per day at the same hour, seq_no 0.."""
    return [
        txn(amount=a, card_id=card_id, seq_no=i, at=start + timedelta(days=i), **kw)
        for i, a in enumerate(amounts)
    ]


def window(amounts=(), **kw) -> WindowState:
    params = dict(window_size=20, forgetting_factor=0.9, interval_multiplier=3.0, std_floor_rel=0.1, std_floor_abs=100.0)
    params.update(kw)
    return WindowState(card_id="u1c0", amounts=tuple(amounts), **params)


@pytest.fixture
def cfg() -> EngineConfig:
    return EngineConfig()


@pytest.fixture
def quiet_cfg() -> EngineConfig:
    """Risk scoring switched off: only the window and the controller decide."""
    return EngineConfig(score_table=ScoreTable.zero())
