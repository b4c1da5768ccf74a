"""
Synthetic Transaction Generator — benign streams + fraud-attack injection
===========================================================================
Desk-scale stand-in for a large simulated card dataset.

Benign behaviour, per card ("persona"):
  - lognormal amounts around a per-card spend mean with a per-card CV
  - exponential inter-transaction gaps, folded into the card's active hours
  - MCCs from a weighted everyday pool, home state (or ONLINE)
  - rare authorization errors (≤ 1%)

Attack anatomy (AttackParams):
  - a few low-value onset transactions, then high amounts (multiple of the
    card's spend mean)
  - small gaps, fraud-prone MCCs, night hours, out-of-state merchants,
    technical glitches and CVV errors

Everything is a pure function of the seed (numpy default_rng streams keyed
by [seed, card index] / [seed, attack index]).
"""
from __future__ import annotations

import logging
import math
from datetime import datetime, time, timedelta
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from modules.errors import RejectedInput
from modules.models import ONLINE_STATE, Channel, ErrorFlag, Transaction

logger = logging.getLogger(__name__)

# state → (city, zip)
STATE_CITIES: Dict[str, Tuple[str, str]] = {
    "CA": ("Los Angeles", "90001"),
    "TX": ("Houston", "77001"),
    "NY": ("New York", "10001"),
    "FL": ("Miami", "33101"),
    "IL": ("Chicago", "60601"),
    "WA": ("Seattle", "98101"),
    "OH": ("Columbus", "43004"),
    "GA": ("Atlanta", "30301"),
    "NV": ("Las Vegas", "88901"),
    "AZ": ("Phoenix", "85001"),
}

EVERYDAY_MCCS: Dict[int, float] = {
    5411: 0.30,  # grocery
    5812: 0.15,  # restaurants
    5541: 0.15,  # service stations
    5912: 0.10,  # drug stores
    5311: 0.10,  # department stores
    5999: 0.08,  # misc retail
    5814: 0.07,  # fast food
    4111: 0.05,  # commuter transport
}

_BENIGN_ERROR_FLAGS = [f for f in ErrorFlag if f != ErrorFlag.OTHER]


# ══════════════════════════════════════════════════════════════════════════════
# PARAMETERS
# ══════════════════════════════════════════════════════════════════════════════
class GenParams(BaseModel):
    seed: int = Field(0, ge=0, lt=2**64)
    n_cards: int = Field(10, gt=0)
    txns_per_card: int = Field(200, gt=0)
    start: datetime = datetime(2019, 1, 1)
    spend_mean_range: Tuple[float, float] = (20.0, 150.0)  # dollars
    spend_cv_range: Tuple[float, float] = (0.05, 0.10)  # steady everyday spenders
    active_start_range: Tuple[int, int] = (7, 10)
    active_end_range: Tuple[int, int] = (19, 23)
    home_states: List[str] = Field(default_factory=lambda: ["CA", "TX", "IL", "WA", "OH", "GA"])
    benign_gap_mean_minutes: float = Field(240.0, gt=0)
    mcc_pool: Dict[int, float] = Field(default_factory=lambda: dict(EVERYDAY_MCCS))
    error_rate: float = Field(0.005, ge=0.0, le=0.01)
    online_share: float = Field(0.1, ge=0.0, le=1.0)

    @field_validator("spend_mean_range", "spend_cv_range", "active_start_range", "active_end_range")
    @classmethod
    def ordered_positive(cls, v):
        if v[0] > v[1] or v[0] < 0:
            raise ValueError("range must be (lo, hi) with 0 ≤ lo ≤ hi")
        return v

    @field_validator("mcc_pool")
    @classmethod
    def weights_positive(cls, v):
        if not v or any(w <= 0 for w in v.values()):
            raise ValueError("mcc_pool needs at least one MCC with a positive weight")
        return v

    @model_validator(mode="after")
    def hours_consistent(self):
        if self.spend_mean_range[0] <= 0:
            raise ValueError("spend mean must be positive")
        if not (0 <= self.active_start_range[0] and self.active_end_range[1] <= 23):
            raise ValueError("active hours must lie within 0..23")
        if self.active_start_range[1] > self.active_end_range[0]:
            raise ValueError("active hours must start before they end")
        if not self.home_states:
            raise ValueError("home_states must not be empty")
        return self


class AttackParams(BaseModel):
    n_low: int = Field(3, ge=0)
    low_amount_range: Tuple[float, float] = (1.0, 10.0)  # dollars
    high_amount_multiplier: float = Field(5.0, ge=2.0)
    attack_gap_range: Tuple[float, float] = (10.0, 120.0)  # seconds
    attack_mcc_pool: List[int] = Field(default_factory=lambda: [6051, 4829, 7995, 5967, 6540])
    error_prob: Dict[ErrorFlag, float] = Field(
        default_factory=lambda: {ErrorFlag.TECHNICAL_GLITCH: 0.4, ErrorFlag.BAD_CVV: 0.4}
    )
    attack_hours: Tuple[int, int] = (0, 5)
    duration_txns: int = Field(12, gt=0)
    attack_states: List[str] = Field(default_factory=lambda: ["NV", "FL", "NY", "AZ"])
    channel: Channel = Channel.ONLINE

    @model_validator(mode="after")
    def onset_shorter_than_attack(self):
        if self.n_low >= self.duration_txns:
            raise ValueError("n_low must be smaller than duration_txns")
        if not (0 < self.low_amount_range[0] <= self.low_amount_range[1]):
            raise ValueError("low_amount_range must be positive and ordered")
        if not (0 <= self.attack_gap_range[0] <= self.attack_gap_range[1]):
            raise ValueError("attack_gap_range must be nonnegative and ordered")
        if not (0 <= self.attack_hours[0] <= self.attack_hours[1] <= 23):
            raise ValueError("attack_hours must be an ordered range within 0..23")
        if not self.attack_mcc_pool or not self.attack_states:
            raise ValueError("attack_mcc_pool and attack_states must not be empty")
        if any(not 0.0 <= p <= 1.0 for p in self.error_prob.values()):
            raise ValueError("error probabilities must lie within [0, 1]")
        return self


class AttackSpec(BaseModel):
    card_id: str
    start_time: datetime
    params: AttackParams = Field(default_factory=AttackParams)


class CardPersona(BaseModel):
    card_id: str
    spend_mean: float  # dollars
    spend_cv: float
    active_start: int
    active_end: int
    home_state: str


class SyntheticStream(BaseModel):
    transactions: List[Transaction]
    personas: Dict[str, CardPersona]


# ══════════════════════════════════════════════════════════════════════════════
# BENIGN STREAMS
# ══════════════════════════════════════════════════════════════════════════════
def _into_active_hours(t: datetime, start_h: int, end_h: int) -> datetime:
    """Move t forward to the card's active hours, keeping the minute."""
    if start_h <= t.hour <= end_h:
        return t
    day = t.date() if t.hour < start_h else t.date() + timedelta(days=1)
    return datetime.combine(day, time(start_h, t.minute, t.second))


def _persona(gen: GenParams, index: int, rng: np.random.Generator) -> CardPersona:
    return CardPersona(
        card_id=f"u{index}c0",
        spend_mean=float(rng.uniform(*gen.spend_mean_range)),
        spend_cv=float(rng.uniform(*gen.spend_cv_range)),
        active_start=int(rng.integers(gen.active_start_range[0], gen.active_start_range[1] + 1)),
        active_end=int(rng.integers(gen.active_end_range[0], gen.active_end_range[1] + 1)),
        home_state=str(gen.home_states[int(rng.integers(len(gen.home_states)))]),
    )


def _card_stream(gen: GenParams, p: CardPersona, rng: np.random.Generator) -> List[Transaction]:
    n = gen.txns_per_card
    sigma2 = math.log1p(p.spend_cv ** 2)
    mu = math.log(p.spend_mean) - sigma2 / 2
    amounts = np.maximum(1, np.rint(rng.lognormal(mu, math.sqrt(sigma2), n) * 100)).astype(np.int64)
    gaps = rng.exponential(gen.benign_gap_mean_minutes * 60.0, n)
    mccs = list(gen.mcc_pool)
    probs = np.asarray([gen.mcc_pool[m] for m in mccs], dtype=float)
    mcc_idx = rng.choice(len(mccs), size=n, p=probs / probs.sum())
    err_draw = rng.random(n)
    err_kind = rng.integers(len(_BENIGN_ERROR_FLAGS), size=n)
    online = rng.random(n) < gen.online_share
    chip = rng.random(n) < 0.7

    city, zip_code = STATE_CITIES.get(p.home_state, (p.home_state, None))
    t = gen.start + timedelta(seconds=float(rng.uniform(0, 86400)))
    out: List[Transaction] = []
    for i in range(n):
        t = _into_active_hours(t + timedelta(seconds=float(gaps[i])), p.active_start, p.active_end)
        mcc = mccs[int(mcc_idx[i])]
        errors = frozenset({_BENIGN_ERROR_FLAGS[int(err_kind[i])]}) if err_draw[i] < gen.error_rate else frozenset()
        if online[i]:
            channel, state, m_city, m_zip = Channel.ONLINE, ONLINE_STATE, "ONLINE", None
        else:
            channel = Channel.CHIP if chip[i] else Channel.SWIPE
            state, m_city, m_zip = p.home_state, city, zip_code
        out.append(Transaction(
            card_id=p.card_id,
            seq_no=i,
            timestamp=t,
            amount=int(amounts[i]),
            mcc=mcc,
            merchant_name=f"{mcc}-{state}",
            merchant_city=m_city,
            merchant_state=state,
            zip=m_zip,
            channel=channel,
            errors=errors,
            fraud_label=False,
        ))
    return out


def generate(gen: GenParams) -> SyntheticStream:
    """Benign labeled stream, sorted by (card_id, time), seq_no 0..txns_per_card-1 per card."""
    personas: Dict[str, CardPersona] = {}
    txns: List[Transaction] = []
    for index in range(gen.n_cards):
        rng = np.random.default_rng([gen.seed, index])
        p = _persona(gen, index, rng)
        personas[p.card_id] = p
        txns.extend(_card_stream(gen, p, rng))
    txns.sort(key=lambda t: (t.card_id, t.seq_no))
    logger.info(f"[lab] generated {len(txns)} benign transactions for {gen.n_cards} cards (seed {gen.seed})")
    return SyntheticStream(transactions=txns, personas=personas)


# ══════════════════════════════════════════════════════════════════════════════
# ATTACK INJECTION
# ══════════════════════════════════════════════════════════════════════════════
def _attack_times(start: datetime, params: AttackParams, rng: np.random.Generator) -> List[datetime]:
    lo_h, hi_h = params.attack_hours
    t = start
    if not lo_h <= t.hour <= hi_h:
        day = t.date() if t.hour < lo_h else t.date() + timedelta(days=1)
        t = datetime.combine(day, time(lo_h, t.minute))
    # keep the whole attack inside the attack hours
    longest = timedelta(seconds=(params.duration_txns - 1) * params.attack_gap_range[1])
    latest_start = datetime.combine(t.date(), time(hi_h, 59)) - longest
    if t > latest_start:
        t = max(latest_start, datetime.combine(t.date(), time(lo_h, 0)))

    times = [t]
    for _ in range(params.duration_txns - 1):
        t = t + timedelta(seconds=float(rng.uniform(*params.attack_gap_range)))
        times.append(t)
    return times


def inject_attacks(
    transactions: Sequence[Transaction],
    attacks: Sequence[AttackSpec],
    seed: int,
    personas: Optional[Mapping[str, CardPersona]] = None,
) -> List[Transaction]:
    """
    Insert duration_txns fraud-labeled transactions per attack, re-sort by
    (card_id, time) and reassign per-card seq_no.
    """
    if not attacks:
        return list(transactions)

    spans: Dict[str, Tuple[datetime, datetime]] = {}
    amounts: Dict[str, List[int]] = {}
    states: Dict[str, Dict[str, int]] = {}
    for txn in transactions:
        lo, hi = spans.get(txn.card_id, (txn.timestamp, txn.timestamp))
        spans[txn.card_id] = (min(lo, txn.timestamp), max(hi, txn.timestamp))
        amounts.setdefault(txn.card_id, []).append(txn.amount)
        counts = states.setdefault(txn.card_id, {})
        counts[txn.merchant_state] = counts.get(txn.merchant_state, 0) + 1

    injected: List[Transaction] = []
    occupied: Dict[str, List[Tuple[datetime, datetime]]] = {}
    for k, spec in enumerate(attacks):
        card_id = spec.card_id
        if card_id not in spans:
            raise RejectedInput(f"attack {k} targets unknown card {card_id}")
        lo, hi = spans[card_id]
        if not lo <= spec.start_time <= hi:
            raise RejectedInput(f"attack {k} starts at {spec.start_time}, outside the stream span of {card_id}")

        params = spec.params
        rng = np.random.default_rng([seed, k])
        times = _attack_times(spec.start_time, params, rng)
        for a, b in occupied.get(card_id, []):
            if times[0] <= b and a <= times[-1]:
                raise RejectedInput(f"attack {k} overlaps an earlier attack on {card_id}")
        occupied.setdefault(card_id, []).append((times[0], times[-1]))

        if personas and card_id in personas:
            spend_mean = personas[card_id].spend_mean
            home = personas[card_id].home_state
        else:
            spend_mean = float(np.mean(amounts[card_id])) / 100.0
            home = max(states[card_id].items(), key=lambda kv: kv[1])[0]
        foreign = [s for s in params.attack_states if s != home] or list(params.attack_states)

        for i, t in enumerate(times):
            if i < params.n_low:
                cents = int(round(float(rng.uniform(*params.low_amount_range)) * 100))
            else:
                cents = int(round(spend_mean * params.high_amount_multiplier * float(rng.uniform(0.8, 1.2)) * 100))
            mcc = int(params.attack_mcc_pool[int(rng.integers(len(params.attack_mcc_pool)))])
            errors = frozenset(
                flag for flag in ErrorFlag
                if flag in params.error_prob and rng.random() < params.error_prob[flag]
            )
            state = foreign[int(rng.integers(len(foreign)))]
            city, _ = STATE_CITIES.get(state, (state, None))
            injected.append(Transaction(
                card_id=card_id,
                seq_no=0,
                timestamp=t,
                amount=cents,
                mcc=mcc,
                merchant_name=f"{mcc}-{state}",
                merchant_city=city,
                merchant_state=state,
                zip=None,
                channel=params.channel,
                errors=errors,
                fraud_label=True,
            ))

    combined = list(transactions) + injected
    order = sorted(range(len(combined)), key=lambda i: (combined[i].card_id, combined[i].timestamp, i))
    out: List[Transaction] = []
    next_seq: Dict[str, int] = {}
    for i in order:
        txn = combined[i]
        seq = next_seq.get(txn.card_id, 0)
        next_seq[txn.card_id] = seq + 1
        out.append(txn if txn.seq_no == seq else txn.model_copy(update={"seq_no": seq}))
    logger.info(f"[lab] injected {len(injected)} fraud transactions in {len(attacks)} attacks")
    return out
