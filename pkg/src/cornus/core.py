"""Domain types shared across the package: transactions, log records and the
decision rules derived from per-participant log slots."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional


class RecordType(enum.IntEnum):
    # Values double as the Redis wire encoding of the state key.
    VOTE_YES = 1
    ABORT = 2
    COMMIT = 3


class LogState(enum.IntEnum):
    NONE = 0
    VOTE_YES = 1
    ABORTED = 2
    COMMITTED = 3


class Decision(enum.Enum):
    COMMIT = "COMMIT"
    ABORT = "ABORT"

    @property
    def record(self) -> RecordType:
        return RecordType.COMMIT if self is Decision.COMMIT else RecordType.ABORT


class GlobalDecision(enum.Enum):
    COMMIT = "COMMIT"
    ABORT = "ABORT"
    UNDETERMINED = "UNDETERMINED"


@dataclass(frozen=True, order=True)
class TxnId:
    coordinator_node: int
    seq: int

    def __str__(self) -> str:
        return f"t{self.coordinator_node}.{self.seq}"

    @classmethod
    def parse(cls, text: str) -> "TxnId":
        if not text.startswith("t"):
            raise ValueError(f"bad txn id {text!r}")
        node, _, seq = text[1:].partition(".")
        return cls(int(node), int(seq))


@dataclass(frozen=True)
class Record:
    rec: RecordType
    writer: Optional[int] = None
    time: int = 0


@dataclass
class TxnLogSlot:
    """Write-once vote record plus write-once decision record for one
    (participant log, transaction) pair."""

    vote: Optional[Record] = None
    decision: Optional[Record] = None

    def state(self) -> LogState:
        return derive_state(self)


def derive_state(slot: TxnLogSlot) -> LogState:
    if slot.decision is not None:
        return LogState.COMMITTED if slot.decision.rec is RecordType.COMMIT else LogState.ABORTED
    if slot.vote is not None:
        return LogState.VOTE_YES if slot.vote.rec is RecordType.VOTE_YES else LogState.ABORTED
    return LogState.NONE


def has_abort_record(slot: TxnLogSlot) -> bool:
    return any(r is not None and r.rec is RecordType.ABORT for r in (slot.vote, slot.decision))


def global_decision(slots: Mapping[object, TxnLogSlot]) -> GlobalDecision:
    """Outcome implied by the participants' logs: abort as soon as any log
    holds an ABORT record, commit once every log holds a VOTE-YES vote."""
    if any(has_abort_record(s) for s in slots.values()):
        return GlobalDecision.ABORT
    if slots and all(s.vote is not None and s.vote.rec is RecordType.VOTE_YES for s in slots.values()):
        return GlobalDecision.COMMIT
    return GlobalDecision.UNDETERMINED


def participant_log(node: int) -> str:
    return str(node)


def coordinator_log(node: int) -> str:
    """Log holding a baseline-2PC coordinator's own decision records."""
    return f"c{node}"


READ = "r"
WRITE = "w"


@dataclass(frozen=True)
class Transaction:
    id: TxnId
    coordinator: int
    participants: tuple[int, ...]
    accesses: Mapping[int, tuple[tuple[int, str], ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.participants:
            raise ValueError("a transaction needs at least one participant")
        if len(set(self.participants)) != len(self.participants):
            raise ValueError("duplicate participant")

    @property
    def read_only(self) -> bool:
        return all(mode == READ for acc in self.accesses.values() for _, mode in acc)

    def read_only_at(self, node: int) -> bool:
        acc = self.accesses.get(node)
        return acc is not None and all(mode == READ for _, mode in acc)

    @property
    def distributed(self) -> bool:
        return len(self.participants) > 1
