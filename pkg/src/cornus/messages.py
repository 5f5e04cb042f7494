"""Protocol messages and their versioned text encoding."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any

from .core import TxnId

WIRE_VERSION = "v1"


class Kind(enum.Enum):
    VOTE_REQ = "VOTE_REQ"          # {participants}
    VOTE_RESP = "VOTE_RESP"        # {vote: yes | abort | read_only}
    DECISION = "DECISION"          # {decision}
    DECISION_REQ = "DECISION_REQ"  # 2PC termination query
    DECISION_RESP = "DECISION_RESP"  # {outcome: COMMIT | ABORT | uncertain}
    ACCESS = "ACCESS"              # execution phase {accesses}
    ACCESS_RESP = "ACCESS_RESP"    # {ok}
    RELEASE = "RELEASE"            # drop locks without a commit protocol


@dataclass(frozen=True)
class Message:
    kind: Kind
    txn: TxnId
    src: int
    dst: int
    body: dict[str, Any] = field(default_factory=dict)

    def encode(self) -> str:
        body = json.dumps(self.body, sort_keys=True, separators=(",", ":"))
        return f"{WIRE_VERSION} {self.kind.value} {self.txn} {self.src} {self.dst} {body}"

    @classmethod
    def decode(cls, text: str) -> "Message":
        version, kind, txn, src, dst, body = text.split(" ", 5)
        if version != WIRE_VERSION:
            raise ValueError(f"unsupported wire version {version!r}")
        return cls(Kind(kind), TxnId.parse(txn), int(src), int(dst), json.loads(body))
