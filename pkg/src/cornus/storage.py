"""Disaggregated log storage: the Log / LogOnce / read API, an in-memory
linearizable backend and the latency models used by the simulator."""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Union

from .core import LogState, Record, RecordType, TxnId, TxnLogSlot, derive_state


class StorageError(Exception):
    pass


class StorageUnavailable(StorageError):
    """The backend could not be reached; callers retry."""


class IllegalTransition(StorageError):
    """A write would contradict an existing record. Only a protocol bug can
    trigger this."""


class LogStore(Protocol):
    def log_once(self, log: str, txn: TxnId, rec: RecordType, *, data: Optional[bytes] = None,
                 writer: Optional[int] = None) -> LogState: ...

    def log(self, log: str, txn: TxnId, rec: RecordType, *, data: Optional[bytes] = None,
            writer: Optional[int] = None) -> None: ...

    def read_state(self, log: str, txn: TxnId) -> LogState: ...


# (log, txn, field, record) -> None; field is "vote" or "decision"
WriteHook = Callable[[str, TxnId, str, Record], None]


class MemoryLogStore:
    """Slot-per-transaction log service. Every operation runs under one lock,
    which makes the store linearizable for concurrent callers."""

    def __init__(self, clock: Callable[[], int] = lambda: 0, on_write: Optional[WriteHook] = None):
        self._slots: dict[tuple[str, TxnId], TxnLogSlot] = {}
        self._data: dict[tuple[str, TxnId], bytes] = {}
        self._lock = threading.Lock()
        self.clock = clock
        self.on_write = on_write
        self.available = True
        self.writes: list[tuple[str, TxnId, str, Record]] = []

    def slot(self, log: str, txn: TxnId) -> TxnLogSlot:
        """Snapshot of a slot (a copy; never mutate the store through it)."""
        with self._lock:
            s = self._slots.get((log, txn))
            return TxnLogSlot(s.vote, s.decision) if s else TxnLogSlot()

    def slots(self) -> dict[tuple[str, TxnId], TxnLogSlot]:
        with self._lock:
            return {k: TxnLogSlot(v.vote, v.decision) for k, v in self._slots.items()}

    def _check(self):
        if not self.available:
            raise StorageUnavailable("log storage is down")

    def _write(self, log, txn, slot, field_name, rec, writer):
        record = Record(rec, writer, self.clock())
        setattr(slot, field_name, record)
        self.writes.append((log, txn, field_name, record))
        if self.on_write is not None:
            self.on_write(log, txn, field_name, record)

    def _put_data(self, log, txn, data, writer):
        if data is None:
            return
        if writer is not None and str(writer) != log:
            raise PermissionError(f"node {writer} may not write user data into log {log}")
        self._data[(log, txn)] = data

    def log_once(self, log, txn, rec, *, data=None, writer=None) -> LogState:
        if rec not in (RecordType.VOTE_YES, RecordType.ABORT):
            raise ValueError("LogOnce only records votes")
        with self._lock:
            self._check()
            self._put_data(log, txn, data, writer)
            slot = self._slots.setdefault((log, txn), TxnLogSlot())
            if slot.vote is None and slot.decision is None:
                self._write(log, txn, slot, "vote", rec, writer)
            return derive_state(slot)

    def log(self, log, txn, rec, *, data=None, writer=None) -> None:
        with self._lock:
            self._check()
            slot = self._slots.get((log, txn)) or TxnLogSlot()
            field_name = _plain_log_target(slot, rec)
            self._put_data(log, txn, data, writer)
            self._slots[(log, txn)] = slot
            if field_name is not None:
                self._write(log, txn, slot, field_name, rec, writer)

    def read_state(self, log, txn) -> LogState:
        with self._lock:
            self._check()
            s = self._slots.get((log, txn))
            return derive_state(s) if s else LogState.NONE

    def read_data(self, log, txn) -> Optional[bytes]:
        with self._lock:
            return self._data.get((log, txn))


def _plain_log_target(slot: TxnLogSlot, rec: RecordType) -> Optional[str]:
    """Field a plain Log(rec) fills, None for an idempotent repeat; raises on
    a contradiction."""
    vote = slot.vote.rec if slot.vote else None
    decision = slot.decision.rec if slot.decision else None
    if rec is RecordType.VOTE_YES:
        if vote is None and decision is None:
            return "vote"
        if vote is RecordType.VOTE_YES:
            return None
        raise IllegalTransition(f"VOTE_YES over {vote or decision}")
    if rec is RecordType.COMMIT:
        if vote is RecordType.ABORT or decision is RecordType.ABORT:
            raise IllegalTransition("COMMIT over ABORT")
        return None if decision is RecordType.COMMIT else "decision"
    # ABORT
    if decision is RecordType.COMMIT:
        raise IllegalTransition("ABORT over COMMIT")
    if vote is None and decision is None:
        return "vote"
    if vote is RecordType.ABORT or decision is RecordType.ABORT:
        return None
    return "decision"


@dataclass(frozen=True)
class FixedLatency:
    """Constant observed latency per request (µs)."""

    write: int
    read: Optional[int] = None

    def timing(self, op: str) -> tuple[int, int]:
        total = self.write if op != "read" else (self.read if self.read is not None else self.write)
        return total // 2, total


@dataclass(frozen=True)
class PaxosLeaderLatency:
    """Storage replicated by a stable Multi-Paxos leader: client -> leader,
    one accept round with the acceptors, leader -> client."""

    one_way: int
    acceptors: int = 2

    def timing(self, op: str) -> tuple[int, int]:
        d = self.one_way
        if op == "read":
            return d, 2 * d  # leader-local read under a lease
        return 3 * d, 4 * d


StorageLatencyModel = Union[FixedLatency, PaxosLeaderLatency]

# Measured Redis conditional-write latency, µs.
REDIS_CONDITIONAL_WRITE_US = 1960


def parse_storage_model(text: str) -> StorageLatencyModel:
    """``fixed:W[:R]`` or ``paxos:D[:ACCEPTORS]``, times in µs."""
    kind, _, rest = text.partition(":")
    parts = [p for p in rest.split(":") if p]
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise ValueError(f"bad storage model {text!r}") from None
    if kind == "fixed" and 1 <= len(nums) <= 2:
        return FixedLatency(*nums)
    if kind == "paxos" and 1 <= len(nums) <= 2:
        return PaxosLeaderLatency(*nums)
    raise ValueError(f"bad storage model {text!r}")
