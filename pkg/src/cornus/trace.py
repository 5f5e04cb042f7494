"""Append-only observable history of a simulation run.

Serialized one event per line::

    #cornus-trace v1 {header json}
    <time>\t<node>\t<KIND>\t<payload json>

``node`` is ``-`` for events not attributable to a compute node (storage
outages, end of run). Payload JSON uses sorted keys so traces are
byte-stable.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Optional

HEADER_PREFIX = "#cornus-trace v1 "

EVENT_KINDS = frozenset({
    "BEGIN",            # {txn, coordinator, participants, decision_log, skip}
    "SEND",             # {msg}
    "DELIVER",          # {msg}
    "DROP",             # {msg, reason}
    "TIMEOUT",          # {txn, timer}
    "STORE_REQ",        # {req, op, log, txn, rec}
    "STORE_RESP",       # {req, op, log, txn, rec, result, issued}
    "SLOT_WRITE",       # {log, txn, field, rec, writer, req, issued}
    "STORAGE_ERROR",    # {req, log, txn, rec, error}
    "STORAGE_DOWN",
    "STORAGE_UP",
    "DECIDE",           # {txn, decision, role}
    "REPLY_TO_CALLER",  # {txn, decision}
    "RO_VOTE",          # {txn}: read-only participant left the protocol
    "CRASH",            # {after_actions}
    "RECOVER",
    "END",
})


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TraceEvent:
    time: int
    node: Optional[int]
    kind: str
    data: dict[str, Any] = field(default_factory=dict)

    def to_line(self) -> str:
        node = "-" if self.node is None else str(self.node)
        payload = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return f"{self.time}\t{node}\t{self.kind}\t{payload}"

    @classmethod
    def from_line(cls, line: str, lineno: int = 0) -> "TraceEvent":
        parts = line.rstrip("\n").split("\t", 3)
        if len(parts) != 4:
            raise TraceFormatError(f"line {lineno}: expected 4 tab-separated fields: {line!r}")
        t, node, kind, payload = parts
        if kind not in EVENT_KINDS:
            raise TraceFormatError(f"line {lineno}: unknown event kind {kind!r}")
        try:
            return cls(int(t), None if node == "-" else int(node), kind, json.loads(payload))
        except ValueError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from None


@dataclass
class Trace:
    header: dict[str, Any] = field(default_factory=dict)
    events: list[TraceEvent] = field(default_factory=list)

    def add(self, time: int, node: Optional[int], kind: str, **data) -> TraceEvent:
        ev = TraceEvent(time, node, kind, data)
        self.events.append(ev)
        return ev

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, *kinds: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind in kinds]

    def dumps(self) -> str:
        head = HEADER_PREFIX + json.dumps(self.header, sort_keys=True, separators=(",", ":"))
        return "\n".join([head, *(e.to_line() for e in self.events)]) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    @classmethod
    def loads(cls, text: str) -> "Trace":
        return cls.from_lines(text.splitlines())

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Trace":
        trace = cls()
        for i, line in enumerate(lines, 1):
            if not line.strip():
                continue
            if line.startswith(HEADER_PREFIX):
                trace.header = json.loads(line[len(HEADER_PREFIX):])
            elif line.startswith("#"):
                raise TraceFormatError(f"line {i}: unsupported header {line!r}")
            else:
                trace.events.append(TraceEvent.from_line(line, i))
        return trace
