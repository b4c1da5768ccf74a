"""
Cardholder Profile - hour histogram, modal state and familiar MCCs
"""
from __future__ import annotations

from .errors import RejectedInput
from .models import CardholderProfile, Transaction


def new_profile(card_id: str) -> CardholderProfile:
    return CardholderProfile(card_id=card_id)


def update_profile(profile: CardholderProfile, txn: Transaction, familiar_min: int = 3) -> CardholderProfile:
    """
    Fold one accepted transaction into the profile. The caller never passes
    blocked transactions here, so an attack cannot reshape the profile.
    """
    if txn.card_id != profile.card_id:
        raise RejectedInput(f"profile of {profile.card_id} cannot absorb a transaction of {txn.card_id}")

    hist = list(profile.active_hour_hist)
    hist[txn.timestamp.hour] += 1

    state = txn.merchant_state
    state_counts = dict(profile.state_counts)
    state_counts[state] = state_counts.get(state, 0) + 1
    # ties break toward the most recent transaction's state
    modal = profile.modal_state
    if modal is None or state_counts[state] >= state_counts.get(modal, 0):
        modal = state

    mcc_counts = dict(profile.mcc_counts)
    mcc_counts[txn.mcc] = mcc_counts.get(txn.mcc, 0) + 1
    familiar = profile.familiar_mccs
    if mcc_counts[txn.mcc] >= familiar_min and txn.mcc not in familiar:
        familiar = familiar | {txn.mcc}

    last = profile.last_txn_time
    if last is None or txn.timestamp > last:
        last = txn.timestamp

    return profile.model_copy(update={
        "active_hour_hist": tuple(hist),
        "state_counts": state_counts,
        "mcc_counts": mcc_counts,
        "modal_state": modal,
        "familiar_mccs": familiar,
        "last_txn_time": last,
        "txn_count": profile.txn_count + 1,
    })


def hour_unusualness(profile: CardholderProfile, hour: int) -> float:
    """
    1 - hist[hour] / max_bin, in [0, 1]. An empty profile answers 1.0; callers
    check profile_in_warmup() to know the value is a cold-start guess.
    """
    if not 0 <= hour <= 23:
        raise RejectedInput(f"hour must be within 0..23, got {hour}")
    max_bin = max(profile.active_hour_hist)
    if max_bin == 0:
        return 1.0
    return 1.0 - profile.active_hour_hist[hour] / max_bin


def profile_in_warmup(profile: CardholderProfile, warmup_txns: int = 5) -> bool:
    return profile.txn_count < warmup_txns
