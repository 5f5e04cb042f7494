import pytest
from hypothesis import given, strategies as st

from cornus.core import (
    GlobalDecision, LogState, Record, RecordType, Transaction, TxnId, TxnLogSlot, derive_state, global_decision,
)
from cornus.storage import IllegalTransition, MemoryLogStore

YES, ABORT, COMMIT = RecordType.VOTE_YES, RecordType.ABORT, RecordType.COMMIT


def slot(vote=None, decision=None):
    return TxnLogSlot(Record(vote) if vote else None, Record(decision) if decision else None)


@pytest.mark.parametrize("vote,decision,want", [
    (None, None, LogState.NONE),
    (YES, None, LogState.VOTE_YES),
    (ABORT, None, LogState.ABORTED),
    (YES, COMMIT, LogState.COMMITTED),
    (YES, ABORT, LogState.ABORTED),
])
def test_derived_state_decision_dominates_vote(vote, decision, want):
    assert derive_state(slot(vote, decision)) is want


def test_global_decision_rules():
    assert global_decision({}) is GlobalDecision.UNDETERMINED
    assert global_decision({1: slot(YES), 2: slot(YES)}) is GlobalDecision.COMMIT
    assert global_decision({1: slot(YES), 2: slot()}) is GlobalDecision.UNDETERMINED
    assert global_decision({1: slot(YES), 2: slot(ABORT)}) is GlobalDecision.ABORT
    # an abort decision record counts as well as an abort vote
    assert global_decision({1: slot(YES, ABORT), 2: slot(YES)}) is GlobalDecision.ABORT


def test_txn_id_round_trip_and_errors():
    t = TxnId(3, 17)
    assert str(t) == "t3.17"
    assert TxnId.parse("t3.17") == t
    with pytest.raises(ValueError):
        TxnId.parse("x3.17")


def test_transaction_validation_and_flags():
    with pytest.raises(ValueError):
        Transaction(TxnId(0, 1), 0, ())
    with pytest.raises(ValueError):
        Transaction(TxnId(0, 1), 0, (1, 1))
    t = Transaction(TxnId(0, 1), 0, (1, 2), {1: ((5, "r"),), 2: ((6, "w"),)})
    assert t.distributed and not t.read_only
    assert t.read_only_at(1) and not t.read_only_at(2)
    assert Transaction(TxnId(0, 2), 0, (1,), {1: ((5, "r"),)}).read_only


# Writes a protocol may issue against a participant's log: LogOnce of a vote
# by anyone, plain Log of a vote by the owner, plain Log of a decision.
ops = st.lists(st.tuples(st.integers(0, 2), st.sampled_from(["once-yes", "once-abort", "log-yes",
                                                              "log-commit", "log-abort"])), max_size=12)


@given(ops)
def test_global_decision_never_changes_once_determined(seq):
    # Legal protocol writes never flip the decision: commit is only logged
    # after the decision is COMMIT, and storage rejects contradictions.
    store, txn = MemoryLogStore(), TxnId(0, 1)
    logs = ["0", "1", "2"]
    first = None
    for idx, op in seq:
        g = global_decision({log: store.slot(log, txn) for log in logs})
        if op == "log-commit" and g is not GlobalDecision.COMMIT:
            continue
        if op == "log-abort" and g is GlobalDecision.COMMIT:
            continue
        kind, rec = op.split("-")
        rec = {"yes": YES, "abort": ABORT, "commit": COMMIT}[rec]
        try:
            if kind == "once":
                store.log_once(logs[idx], txn, rec)
            else:
                store.log(logs[idx], txn, rec)
        except IllegalTransition:
            continue
        g = global_decision({log: store.slot(log, txn) for log in logs})
        if first is None and g is not GlobalDecision.UNDETERMINED:
            first = g
        if first is not None:
            assert g is first
