import pytest

from cornus.core import LogState, RecordType, TxnId
from cornus.storage import (
    FixedLatency, IllegalTransition, MemoryLogStore, PaxosLeaderLatency, StorageUnavailable, parse_storage_model,
)

T = TxnId(0, 1)
YES, ABORT, COMMIT = RecordType.VOTE_YES, RecordType.ABORT, RecordType.COMMIT


def test_log_once_on_empty_slot_writes_and_returns_new_state():
    s = MemoryLogStore()
    assert s.log_once("1", T, YES) is LogState.VOTE_YES
    assert s.log_once("2", T, ABORT) is LogState.ABORTED


def test_log_once_on_filled_slot_returns_existing_state_unchanged():
    s = MemoryLogStore()
    s.log_once("1", T, YES)
    assert s.log_once("1", T, ABORT) is LogState.VOTE_YES
    s.log("1", T, COMMIT)
    assert s.log_once("1", T, ABORT) is LogState.COMMITTED
    s.log_once("2", T, ABORT)
    assert s.log_once("2", T, YES) is LogState.ABORTED
    assert len(s.writes) == 3


def test_log_once_rejects_decision_records():
    with pytest.raises(ValueError):
        MemoryLogStore().log_once("1", T, COMMIT)


def test_plain_log_transitions():
    s = MemoryLogStore()
    s.log("1", T, YES)
    s.log("1", T, YES)  # idempotent repeat
    s.log("1", T, COMMIT)
    s.log("1", T, COMMIT)
    assert s.read_state("1", T) is LogState.COMMITTED
    with pytest.raises(IllegalTransition):
        s.log("1", T, ABORT)
    s.log("2", T, ABORT)
    with pytest.raises(IllegalTransition):
        s.log("2", T, COMMIT)
    with pytest.raises(IllegalTransition):
        s.log("2", T, YES)
    # abort after a yes vote fills the decision field
    s.log("3", T, YES)
    s.log("3", T, ABORT)
    slot = s.slot("3", T)
    assert slot.vote.rec is YES and slot.decision.rec is ABORT


def test_read_of_missing_slot_is_none():
    assert MemoryLogStore().read_state("9", T) is LogState.NONE


def test_unavailable_store_raises():
    s = MemoryLogStore()
    s.available = False
    for call in (lambda: s.log_once("1", T, YES), lambda: s.log("1", T, YES), lambda: s.read_state("1", T)):
        with pytest.raises(StorageUnavailable):
            call()


def test_user_data_only_in_own_log():
    s = MemoryLogStore()
    s.log_once("1", T, YES, data=b"x", writer=1)
    assert s.read_data("1", T) == b"x"
    with pytest.raises(PermissionError):
        s.log_once("2", T, ABORT, data=b"y", writer=1)
    # a terminator's LogOnce without data is fine
    assert s.log_once("2", T, ABORT, writer=1) is LogState.ABORTED


def test_write_hook_sees_every_record():
    seen = []
    s = MemoryLogStore(clock=lambda: 42, on_write=lambda *a: seen.append(a))
    s.log_once("1", T, YES, writer=1)
    s.log("1", T, COMMIT, writer=1)
    assert [(log, f, r.rec, r.time) for log, _, f, r in seen] == [("1", "vote", YES, 42), ("1", "decision", COMMIT, 42)]


def test_latency_models():
    assert FixedLatency(1960).timing("log_once") == (980, 1960)
    assert FixedLatency(1960, 500).timing("read") == (250, 500)
    assert FixedLatency(1960).timing("read") == (980, 1960)
    d = 250
    assert PaxosLeaderLatency(d).timing("log") == (3 * d, 4 * d)
    assert PaxosLeaderLatency(d).timing("read") == (d, 2 * d)


@pytest.mark.parametrize("text,want", [
    ("fixed:1960", FixedLatency(1960)),
    ("fixed:1960:300", FixedLatency(1960, 300)),
    ("paxos:250", PaxosLeaderLatency(250)),
    ("paxos:250:2", PaxosLeaderLatency(250, 2)),
])
def test_parse_storage_model(text, want):
    assert parse_storage_model(text) == want


@pytest.mark.parametrize("text", ["fixed", "fixed:x", "raft:1", "paxos:1:2:3"])
def test_parse_storage_model_rejects(text):
    with pytest.raises(ValueError):
        parse_storage_model(text)
