"""
DETECTION ENGINE — Per-transaction pipeline over many cards
=============================================================
profile → score → window → controller, for every transaction, with per-card
state created lazily on first sight.

Contract: processing is strictly sequential within a card; cards are
independent, so a stream may be partitioned by card_id and the partitions
run concurrently (see process_partitioned).
"""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Union

import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from modules.config import EngineConfig
from modules.errors import CheckpointError, OrderingError, RejectedInput
from modules.models import (
    ACCEPTED_ACTIONS, Action, CardholderProfile, ControllerState, Decision, Transaction, WindowState,
)
from modules.profile import new_profile, update_profile
from modules.risk_checker import total_score
from engines import window_engine
from engines.controller_engine import new_controller, step

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "attackguard-engine"
CHECKPOINT_VERSION = 1


# ══════════════════════════════════════════════════════════════════════════════
# STATE
# ══════════════════════════════════════════════════════════════════════════════
class CardState(BaseModel):
    profile: CardholderProfile
    window: WindowState
    controller: ControllerState
    last_seen_at: Optional[datetime] = None  # any outcome; drives gap scoring
    last_seq_no: Optional[int] = None


class EngineCounters(BaseModel):
    processed: int = 0
    allowed: int = 0
    flagged: int = 0
    blocked: int = 0
    limited: int = 0
    stepup: int = 0
    enrichment: int = 0


class EngineState(BaseModel):
    cfg: EngineConfig = Field(default_factory=EngineConfig)
    cards: Dict[str, CardState] = Field(default_factory=dict)
    counters: EngineCounters = Field(default_factory=EngineCounters)


_COUNTER_FIELD = {
    Action.ALLOW: "allowed",
    Action.FLAG: "flagged",
    Action.BLOCK: "blocked",
    Action.LIMIT_AMOUNT: "limited",
    Action.STEP_UP_AUTH: "stepup",
    Action.DATA_ENRICHMENT: "enrichment",
}


# ══════════════════════════════════════════════════════════════════════════════
# ENGINE
# ══════════════════════════════════════════════════════════════════════════════
class DetectionEngine:
    """Stateful wrapper around EngineState; one instance per stream (or per card partition)."""

    def __init__(self, cfg: Optional[EngineConfig] = None, state: Optional[EngineState] = None):
        if state is None:
            state = EngineState(cfg=cfg or EngineConfig())
        elif cfg is not None and cfg != state.cfg:
            raise RejectedInput("pass either a config or a restored state, not conflicting both")
        self.state = state

    @property
    def cfg(self) -> EngineConfig:
        return self.state.cfg

    @property
    def counters(self) -> EngineCounters:
        return self.state.counters

    def card_state(self, card_id: str) -> Optional[CardState]:
        return self.state.cards.get(card_id)

    def _new_card(self, card_id: str) -> CardState:
        return CardState(
            profile=new_profile(card_id),
            window=window_engine.new_window(card_id, self.cfg),
            controller=new_controller(card_id),
        )

    def _wall_clock(self, txn: Transaction) -> Transaction:
        """Aware timestamps move to the configured zone; naive ones are taken as already local."""
        if txn.timestamp.tzinfo is None:
            return txn
        local = pd.Timestamp(txn.timestamp).tz_convert(self.cfg.timezone).tz_localize(None)
        return txn.model_copy(update={"timestamp": local.to_pydatetime()})

    def process(self, txn: Union[Transaction, Mapping[str, Any]]) -> Decision:
        """
        Decide one transaction and fold it into the card's state. A malformed
        or out-of-order transaction is rejected and leaves the engine untouched.
        """
        if not isinstance(txn, Transaction):
            try:
                txn = Transaction.model_validate(txn)
            except ValidationError as e:
                raise RejectedInput(f"malformed transaction: {e.errors()[0].get('msg')}") from e

        cfg = self.cfg
        txn = self._wall_clock(txn)
        card_id = txn.card_id
        cs = self.state.cards.get(card_id)
        if cs is None:
            cs = self._new_card(card_id)
        elif cs.last_seq_no is not None and txn.seq_no <= cs.last_seq_no:
            raise OrderingError(
                f"seq_no {txn.seq_no} of {card_id} does not follow {cs.last_seq_no}",
                card_id=card_id, seq_no=txn.seq_no,
            )

        card = total_score(
            txn, cs.last_seen_at, cs.profile, cfg.score_table,
            cfg.soft_threshold, cfg.hard_threshold, cfg.profile_warmup_txns,
        )
        controller, window, decision = step(cs.controller, cs.window, card, txn, cfg, txn.timestamp)

        profile = cs.profile
        if decision.action in ACCEPTED_ACTIONS:
            profile = update_profile(profile, txn, cfg.familiar_mcc_min)

        last_seen = cs.last_seen_at
        if last_seen is None or txn.timestamp > last_seen:
            last_seen = txn.timestamp
        self.state.cards[card_id] = CardState.model_construct(
            profile=profile,
            window=window,
            controller=controller,
            last_seen_at=last_seen,
            last_seq_no=txn.seq_no,
        )

        counters = self.state.counters
        counters.processed += 1
        field = _COUNTER_FIELD[decision.action]
        setattr(counters, field, getattr(counters, field) + 1)
        return decision

    def iter_decisions(self, txns: Iterable[Transaction]) -> Iterator[Decision]:
        for index, txn in enumerate(txns):
            try:
                yield self.process(txn)
            except OrderingError as e:
                e.index = index
                raise

    def process_stream(self, txns: Iterable[Transaction]) -> List[Decision]:
        """Fold process over txns; output order matches input order."""
        return list(self.iter_decisions(txns))

    def retune(
        self,
        window_size: Optional[int] = None,
        forgetting_factor: Optional[float] = None,
        interval_multiplier: Optional[float] = None,
    ) -> EngineConfig:
        """Adjust the window parameters of the running engine, for every card."""
        data = self.cfg.model_dump()
        if window_size is not None:
            data["window_size"] = window_size
        if forgetting_factor is not None:
            data["forgetting_factor"] = forgetting_factor
        if interval_multiplier is not None:
            data["interval_multiplier"] = interval_multiplier
        try:
            cfg = EngineConfig.model_validate(data)
        except ValidationError as e:
            raise RejectedInput(f"invalid retune: {e.errors()[0].get('msg')}") from e

        self.state.cfg = cfg
        for card_id, cs in self.state.cards.items():
            self.state.cards[card_id] = cs.model_copy(update={"window": window_engine.retune(cs.window, cfg)})
        logger.info(
            f"[engine] retuned N={cfg.window_size} λ={cfg.forgetting_factor} c={cfg.interval_multiplier} "
            f"across {len(self.state.cards)} cards"
        )
        return cfg

    # ──────────────────────────────────────────────────────────────────────────
    # CHECKPOINT
    # ──────────────────────────────────────────────────────────────────────────
    def checkpoint(self) -> bytes:
        """Versioned, self-describing JSON bytes; restore() gives an equivalent engine."""
        payload = self.state.model_dump(mode="json")
        envelope = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "sha256": _digest(payload),
            "engine": payload,
        }
        return json.dumps(envelope, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def restore(cls, data: bytes) -> "DetectionEngine":
        try:
            envelope = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"checkpoint is truncated or corrupt: {e}") from e
        if not isinstance(envelope, dict) or envelope.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError("not an engine checkpoint")
        if envelope.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint version {envelope.get('version')} unsupported (expected {CHECKPOINT_VERSION})"
            )
        payload = envelope.get("engine")
        if payload is None or envelope.get("sha256") != _digest(payload):
            raise CheckpointError("checkpoint digest mismatch")
        try:
            state = EngineState.model_validate(payload)
        except ValidationError as e:
            raise CheckpointError(f"checkpoint payload invalid: {e.errors()[0].get('msg')}") from e
        logger.info(f"[engine] restored checkpoint with {len(state.cards)} cards")
        return cls(state=state)


def _digest(payload: Any) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ══════════════════════════════════════════════════════════════════════════════
# PARTITIONED RUN
# ══════════════════════════════════════════════════════════════════════════════
def partition_by_card(txns: Iterable[Transaction]) -> Dict[str, List[int]]:
    """card_id → positions of its transactions in the input order."""
    parts: Dict[str, List[int]] = {}
    for i, txn in enumerate(txns):
        parts.setdefault(txn.card_id, []).append(i)
    return parts


def process_partitioned(
    cfg: EngineConfig, txns: List[Transaction], max_workers: int = 4,
) -> List[Decision]:
    """
    Run each card's subsequence on its own engine in a thread pool and merge
    the decisions back into input order. Equal to a sequential run by per-card
    isolation.
    """
    parts = partition_by_card(txns)
    out: List[Optional[Decision]] = [None] * len(txns)

    def _run(positions: List[int]) -> List[Decision]:
        engine = DetectionEngine(cfg)
        return engine.process_stream(txns[i] for i in positions)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {card_id: pool.submit(_run, pos) for card_id, pos in parts.items()}
        for card_id, fut in futures.items():
            for i, decision in zip(parts[card_id], fut.result()):
                out[i] = decision
    return out  # type: ignore[return-value]
