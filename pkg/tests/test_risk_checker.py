from __future__ import annotations

import random
from datetime import datetime, timedelta

import pytest

from modules.config import ScoreTable
from modules.errors import RejectedInput
from modules.models import ONLINE_STATE, CardholderProfile, ErrorFlag, Intensity, Reason, ScoreCard
from modules.profile import new_profile, update_profile
from modules.risk_checker import (
    classify_intensity, factor_reasons, score_errors, score_gap, score_location, score_mcc,
    score_time, total_score,
)

from conftest import T0, txn

TABLE = ScoreTable()


def _settled_profile(hour: int = 12, state: str = "CA", n: int = 10) -> CardholderProfile:
    p = new_profile("u1c0")
    for i in range(n):
        p = update_profile(p, txn(seq_no=i, at=datetime(2019, 1, 1 + i, hour, 0), state=state))
    return p


def test_gap_tiers() -> None:
    assert score_gap(None, T0, TABLE) == 0
    assert score_gap(T0, T0 + timedelta(seconds=30), TABLE) == 3
    assert score_gap(T0, T0 + timedelta(seconds=60), TABLE) == 3
    assert score_gap(T0, T0 + timedelta(seconds=200), TABLE) == 2
    assert score_gap(T0, T0 + timedelta(seconds=900), TABLE) == 1
    assert score_gap(T0, T0 + timedelta(hours=2), TABLE) == 0


def test_gap_backwards_scores_as_zero_gap(caplog) -> None:
    assert score_gap(T0, T0 - timedelta(minutes=5), TABLE) == 3
    assert "backwards" in caplog.text


def test_mcc_scores() -> None:
    assert score_mcc(6051, TABLE) == 3
    assert score_mcc(5411, TABLE) == 0
    assert score_mcc(5999, ScoreTable(mcc_risk={5999: 1})) == 1
    with pytest.raises(RejectedInput):
        score_mcc(12000, TABLE)


def test_time_scores() -> None:
    settled = _settled_profile(hour=12)
    assert score_time(3, settled, TABLE) == 3
    assert score_time(12, settled, TABLE) == 0
    warm = _settled_profile(hour=12, n=2)
    assert score_time(3, warm, TABLE) == 1


def test_location_scores() -> None:
    settled = _settled_profile(state="CA")
    assert score_location(txn(state="NY"), settled, TABLE) == 2
    assert score_location(txn(state="CA"), settled, TABLE) == 0
    assert score_location(txn(state=ONLINE_STATE), settled, TABLE) == 0
    assert score_location(txn(state="NY"), new_profile("u1c0"), TABLE) == 0
    assert score_location(txn(state="NY"), _settled_profile(state="CA", n=2), TABLE) == 1


def test_error_scores() -> None:
    assert score_errors(set(), TABLE) == 0
    assert score_errors({ErrorFlag.BAD_CVV}, TABLE) == 3
    assert score_errors({ErrorFlag.TECHNICAL_GLITCH, ErrorFlag.BAD_CVV}, TABLE) == 5
    assert score_errors({ErrorFlag.BAD_EXPIRATION, ErrorFlag.OTHER}, TABLE) == 2


def test_intensity_bands() -> None:
    assert classify_intensity(14, 5, 10) == Intensity.ATTACK_START
    assert classify_intensity(10, 5, 10) == Intensity.ATTACK_START
    assert classify_intensity(6, 5, 10) == Intensity.UNCERTAIN
    assert classify_intensity(4, 5, 10) == Intensity.NORMAL
    assert classify_intensity(0, 5, 10) == Intensity.NORMAL


def test_intensity_monotone_in_total() -> None:
    order = [Intensity.NORMAL, Intensity.UNCERTAIN, Intensity.ATTACK_START]
    ranks = [order.index(classify_intensity(t, 5, 10)) for t in range(0, 30)]
    assert ranks == sorted(ranks)


def test_attack_like_transaction_is_attack_start() -> None:
    profile = _settled_profile(hour=12, state="CA")
    t = txn(at=datetime(2019, 2, 1, 3, 0, 30), mcc=6051, state="NV",
            errors={ErrorFlag.TECHNICAL_GLITCH, ErrorFlag.BAD_CVV})
    card = total_score(t, datetime(2019, 2, 1, 3, 0), profile, TABLE, 5, 10)
    assert (card.gap_score, card.mcc_score, card.time_score, card.location_score, card.error_score) == (3, 3, 3, 2, 5)
    assert card.total == 16
    assert card.intensity == Intensity.ATTACK_START


def test_benign_transaction_is_normal() -> None:
    profile = _settled_profile(hour=12, state="CA")
    card = total_score(txn(at=datetime(2019, 2, 1, 12, 0)), datetime(2019, 1, 30, 12, 0), profile, TABLE, 5, 10)
    assert card.total == 0
    assert card.intensity == Intensity.NORMAL


def test_total_equals_sum_of_factor_calls() -> None:
    rng = random.Random(11)
    profile = _settled_profile(hour=18, state="TX")
    flags = list(ErrorFlag)
    for i in range(200):
        now = datetime(2019, 3, 1) + timedelta(minutes=rng.randrange(0, 60 * 24 * 5))
        prev = now - timedelta(seconds=rng.randrange(0, 3000)) if rng.random() < 0.8 else None
        t = txn(at=now, mcc=rng.choice([5411, 6051, 7995, 5812]), state=rng.choice(["TX", "CA", ONLINE_STATE]),
                errors=rng.sample(flags, rng.randrange(0, 3)))
        card = total_score(t, prev, profile, TABLE, 5, 10)
        expected = (
            score_gap(prev, t.timestamp, TABLE) + score_mcc(t.mcc, TABLE) + score_time(t.hour, profile, TABLE)
            + score_location(t, profile, TABLE) + score_errors(t.errors, TABLE)
        )
        assert card.total == expected


def test_zero_table_is_always_normal() -> None:
    zero = ScoreTable.zero()
    t = txn(at=datetime(2019, 2, 1, 3, 0), mcc=6051, state="NV", errors={ErrorFlag.BAD_CVV})
    card = total_score(t, datetime(2019, 2, 1, 2, 59), new_profile("u1c0"), zero, 5, 10)
    assert card.total == 0
    assert card.intensity == Intensity.NORMAL


def test_bad_thresholds_rejected() -> None:
    with pytest.raises(RejectedInput):
        total_score(txn(), None, new_profile("u1c0"), TABLE, 10, 10)


def test_factor_reasons_in_factor_order() -> None:
    card = ScoreCard(gap_score=3, time_score=2, error_score=2, total=7, intensity=Intensity.UNCERTAIN)
    assert factor_reasons(card) == [Reason.SMALL_GAP, Reason.UNUSUAL_TIME, Reason.ERROR_FLAGS]
