"""
FORGETTING WINDOW — Confidence interval in a sliding window
=============================================================
Per-card ring buffer of accepted amounts (cents, oldest → newest) with
exponential forgetting inside the window:

  weights  : w_i = λ^(k-i)            (1 for the newest, λ, λ², ...)
  mean     : m = Σ w_i x_i / Σ w_i
  deviation: s = sqrt(Σ w_i (x_i - m)² / Σ w_i)      (weighted population)
  floor    : s_eff = max(s, ρ·m + a0)
  interval : lo = max(0, m - c·s_eff),  hi = m + c·s_eff

Only hi flags fraud. collapse() pins the interval to (0, 0) so every positive
amount is an outlier; reset() restores the pre-collapse buffer exactly.
"""
from __future__ import annotations

import logging
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from modules.config import EngineConfig
from modules.errors import NoEstimate, RejectedInput
from modules.models import Verdict, WindowSnapshot, WindowState

logger = logging.getLogger(__name__)


@lru_cache(maxsize=512)
def _weights(forgetting_factor: float, n: int) -> np.ndarray:
    """λ^(n-1), ..., λ, 1 for a buffer of n amounts (oldest first)."""
    w = forgetting_factor ** np.arange(n - 1, -1, -1, dtype=float)
    w.setflags(write=False)
    return w


def new_window(card_id: str, cfg: EngineConfig) -> WindowState:
    return WindowState(
        card_id=card_id,
        window_size=cfg.window_size,
        forgetting_factor=cfg.forgetting_factor,
        interval_multiplier=cfg.interval_multiplier,
        std_floor_rel=cfg.std_floor_rel,
        std_floor_abs=float(cfg.std_floor_abs),
        warmup=cfg.window_warmup,
    )


# ══════════════════════════════════════════════════════════════════════════════
# BUFFER
# ══════════════════════════════════════════════════════════════════════════════
def observe(state: WindowState, amount: int) -> WindowState:
    if amount < 0:
        raise RejectedInput(f"window amounts must be nonnegative, got {amount}")
    amounts = state.amounts + (amount,)
    if len(amounts) > state.window_size:
        amounts = amounts[-state.window_size:]
    return state.model_copy(update={"amounts": amounts})


# ══════════════════════════════════════════════════════════════════════════════
# STATISTICS
# ══════════════════════════════════════════════════════════════════════════════
def window_stats(state: WindowState) -> Tuple[float, float]:
    """(m, s) over the current buffer. Raises NoEstimate for an empty buffer."""
    n = len(state.amounts)
    if n == 0:
        raise NoEstimate(f"window of {state.card_id} is empty")
    lo, hi = min(state.amounts), max(state.amounts)
    if lo == hi:
        return float(lo), 0.0

    x = np.asarray(state.amounts, dtype=float)
    w = _weights(state.forgetting_factor, n)
    sw = w.sum()
    m = float(np.dot(w, x) / sw)
    m = min(max(m, lo), hi)  # rounding must not push m outside the buffer range
    d = x - m
    s = float(np.sqrt(np.dot(w, d * d) / sw))
    return m, s


def weighted_mean(state: WindowState) -> float:
    return window_stats(state)[0]


def weighted_std(state: WindowState) -> float:
    return window_stats(state)[1]


def _interval_from(state: WindowState, m: float, s: float) -> Tuple[float, float]:
    s_eff = max(s, state.std_floor_rel * m + state.std_floor_abs)
    half = state.interval_multiplier * s_eff
    return max(0.0, m - half), m + half


def window_view(state: WindowState) -> Optional[Tuple[float, float, float]]:
    """
    (mean, lo, hi) as the controller sees them, or None while warming up.
    A collapsed window reports (0, 0, 0).
    """
    if state.collapsed:
        return 0.0, 0.0, 0.0
    if len(state.amounts) < state.warmup:
        return None
    m, s = window_stats(state)
    lo, hi = _interval_from(state, m, s)
    return m, lo, hi


def interval(state: WindowState) -> Tuple[float, float]:
    view = window_view(state)
    if view is None:
        raise NoEstimate(
            f"window of {state.card_id} holds {len(state.amounts)} amounts, needs {state.warmup}"
        )
    return view[1], view[2]


def classify(state: WindowState, amount: int) -> Verdict:
    _, hi = interval(state)
    return Verdict.UPPER_OUTLIER if amount > hi else Verdict.INLIER


# ══════════════════════════════════════════════════════════════════════════════
# ATTACK CONTROL
# ══════════════════════════════════════════════════════════════════════════════
def collapse(state: WindowState) -> WindowState:
    """Assign the thresholds and the mean to zero, keeping a snapshot for recovery."""
    if state.collapsed:
        logger.warning(f"[window] {state.card_id} already collapsed; collapse ignored")
        return state
    snap = WindowSnapshot(amounts=state.amounts)
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug(f"[window] {state.card_id} collapsed (snapshot of {len(snap.amounts)} amounts)")
    return state.model_copy(update={"collapsed": True, "snapshot": snap})


def reset(state: WindowState) -> WindowState:
    """Restore the pre-collapse buffer (and so m, s and the interval) exactly."""
    if not state.collapsed or state.snapshot is None:
        raise RejectedInput(f"window of {state.card_id} is not collapsed; nothing to reset")
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug(f"[window] {state.card_id} interval restored from snapshot")
    return state.model_copy(update={
        "amounts": state.snapshot.amounts,
        "collapsed": False,
        "snapshot": None,
    })


def retune(state: WindowState, cfg: EngineConfig) -> WindowState:
    """
    Apply new window size, forgetting factor and interval multiplier. A smaller
    window keeps the newest amounts, in the live buffer and in the snapshot.
    """
    n = cfg.window_size
    snap = state.snapshot
    if snap is not None and len(snap.amounts) > n:
        snap = snap.model_copy(update={"amounts": snap.amounts[-n:]})
    return state.model_copy(update={
        "amounts": state.amounts[-n:],
        "window_size": n,
        "forgetting_factor": cfg.forgetting_factor,
        "interval_multiplier": cfg.interval_multiplier,
        "std_floor_rel": cfg.std_floor_rel,
        "std_floor_abs": float(cfg.std_floor_abs),
        "warmup": cfg.window_warmup,
        "snapshot": snap,
    })
