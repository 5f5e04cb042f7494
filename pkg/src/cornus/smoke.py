"""End-to-end LogOnce scenario runnable against any log store: one commit
and one transaction aborted by a terminator. Used to compare a live Redis
server with the in-memory store."""
from __future__ import annotations

import time
from typing import Optional

from .core import RecordType, TxnId, participant_log
from .storage import LogStore, MemoryLogStore


def smoke(store: LogStore, base_seq: Optional[int] = None, coordinator: int = 0) -> list[tuple[str, str, int]]:
    """Return (step, returned state, final slot state value) per step. Slot
    values use the state-key encoding (0 none, 1 yes, 2 abort, 3 commit)."""
    seq = base_seq if base_seq is not None else time.time_ns() // 1000
    p1, p2 = participant_log(1), participant_log(2)
    t1, t2 = TxnId(coordinator, seq), TxnId(coordinator, seq + 1)
    steps: list[tuple[str, str, int]] = []

    def record(name, result, log, txn):
        steps.append((name, result, int(store.read_state(log, txn))))

    # commit: both vote yes, both log the decision
    record("p1 LogOnce(VOTE_YES)", store.log_once(p1, t1, RecordType.VOTE_YES, data=b"row-1").name, p1, t1)
    record("p2 LogOnce(VOTE_YES)", store.log_once(p2, t1, RecordType.VOTE_YES, data=b"row-2").name, p2, t1)
    store.log(p1, t1, RecordType.COMMIT)
    record("p1 Log(COMMIT)", "ack", p1, t1)
    store.log(p2, t1, RecordType.COMMIT)
    record("p2 Log(COMMIT)", "ack", p2, t1)
    record("terminator LogOnce(ABORT) on committed p2", store.log_once(p2, t1, RecordType.ABORT).name, p2, t1)

    # terminator abort: p1 voted yes, p2 silent; p1 times out and aborts p2
    record("p1 LogOnce(VOTE_YES)", store.log_once(p1, t2, RecordType.VOTE_YES).name, p1, t2)
    record("p1 terminator LogOnce(ABORT) on p2", store.log_once(p2, t2, RecordType.ABORT).name, p2, t2)
    record("p2 late LogOnce(VOTE_YES)", store.log_once(p2, t2, RecordType.VOTE_YES).name, p2, t2)
    record("p2 terminator LogOnce(ABORT) on p1", store.log_once(p1, t2, RecordType.ABORT).name, p1, t2)
    store.log(p1, t2, RecordType.ABORT)
    record("p1 Log(ABORT)", "ack", p1, t2)
    return steps


def compare_with_memory(store: LogStore, base_seq: Optional[int] = None) -> tuple[bool, list, list]:
    seq = base_seq if base_seq is not None else time.time_ns() // 1000
    got = smoke(store, seq)
    want = smoke(MemoryLogStore(), seq)
    return got == want, got, want
