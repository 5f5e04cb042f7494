"""Machinery common to both commit protocols: per-transaction role state,
the execution phase with NO-WAIT locking, and read-only short-cuts."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..core import Decision, Transaction, TxnId, participant_log
from ..messages import Kind, Message
from ..sim.engine import Node, Timeouts
from ..workload import LockTable, acquire_all


class CPhase(enum.Enum):
    EXECUTING = "EXECUTING"
    SENDING_VOTE_REQ = "SENDING_VOTE_REQ"
    AWAITING_VOTES = "AWAITING_VOTES"
    TERMINATING = "TERMINATING"
    LOGGING_DECISION = "LOGGING_DECISION"
    DECIDED = "DECIDED"
    ABORTED_EARLY = "ABORTED_EARLY"


class PPhase(enum.Enum):
    AWAITING_VOTE_REQ = "AWAITING_VOTE_REQ"
    LOGGING_VOTE = "LOGGING_VOTE"
    AWAITING_DECISION = "AWAITING_DECISION"
    TERMINATING = "TERMINATING"
    LOGGING_DECISION = "LOGGING_DECISION"
    ABORTING = "ABORTING"
    RECOVERING = "RECOVERING"
    DONE = "DONE"


@dataclass
class CoordinatorState:
    txn: Transaction
    phase: CPhase = CPhase.SENDING_VOTE_REQ
    votes: dict[int, str] = field(default_factory=dict)
    decision: Optional[Decision] = None
    callback: Optional[Callable[["CoordinatorState"], None]] = None
    # bench timing
    t_start: int = 0
    t_commit_start: Optional[int] = None
    t_votes: Optional[int] = None
    t_reply: Optional[int] = None
    # execution phase
    pending_access: set = field(default_factory=set)
    granted: set = field(default_factory=set)
    exec_failed: bool = False
    outcome: Optional[str] = None  # "COMMIT", "ABORT", "ABORTED_EARLY"
    skipped: bool = False


@dataclass
class ParticipantState:
    txn: Transaction
    phase: PPhase = PPhase.AWAITING_VOTE_REQ
    local_vote: Optional[str] = None
    final: Optional[Decision] = None


class ProtocolNode(Node):
    protocol = "?"

    def __init__(self, node_id: int, timeouts: Timeouts, *, execution: bool = False, ro_known: bool = True,
                 vote_no: frozenset = frozenset()):
        super().__init__(node_id)
        self.timeouts = timeouts
        self.execution = execution
        self.ro_known = ro_known
        self.vote_no = set(vote_no)
        self.locks = LockTable()
        self.coord: dict[TxnId, CoordinatorState] = {}
        self.part: dict[TxnId, ParticipantState] = {}
        # Unfinished transactions this node takes part in / coordinates. Kept
        # across crashes: stands in for what a restarted node rediscovers
        # from its durable logs.
        self.known: dict[TxnId, Transaction] = {}
        self.coordinated: dict[TxnId, Transaction] = {}

    @property
    def own_log(self) -> str:
        return participant_log(self.id)

    def votes_yes(self, txn: TxnId) -> bool:
        return txn not in self.vote_no

    # --- entry points used by harnesses ---
    def submit(self, txn: Transaction, callback=None) -> CoordinatorState:
        """Start ``txn`` with this node as coordinator."""
        ctx = CoordinatorState(txn, callback=callback, t_start=self.now)
        self.coord[txn.id] = ctx
        self.coordinated[txn.id] = txn
        if self.execution:
            self._execute(ctx)
        else:
            self._ready(ctx)
        return ctx

    def join(self, txn: Transaction) -> None:
        """Register as a participant that has finished execution and waits
        for the vote request."""
        self.known[txn.id] = txn
        self.part[txn.id] = ParticipantState(txn)
        self.set_timer(("vote_req", txn.id), self.timeouts.vote_wait)

    # --- execution phase ---
    def _execute(self, ctx: CoordinatorState) -> None:
        ctx.phase = CPhase.EXECUTING
        txn = ctx.txn
        if self.id in txn.participants:
            if acquire_all(self.locks, txn.accesses.get(self.id, ()), txn.id) is None:
                ctx.exec_failed = True
                self._exec_done(ctx)
                return
            ctx.granted.add(self.id)
            self.join(txn)
        for p in txn.participants:
            if p != self.id:
                ctx.pending_access.add(p)
                self.send(p, Kind.ACCESS, txn.id, coordinator=self.id, participants=list(txn.participants),
                          accesses=[list(a) for a in txn.accesses.get(p, ())])
        if ctx.pending_access:
            self.set_timer(("exec", txn.id), self.timeouts.vote_wait, timeout=False)
        else:
            self._exec_done(ctx)

    def _on_access(self, msg: Message) -> None:
        body = msg.body
        txn = Transaction(msg.txn, body["coordinator"], tuple(body["participants"]),
                          {self.id: tuple((k, m) for k, m in body["accesses"])})
        ok = acquire_all(self.locks, txn.accesses[self.id], txn.id) is not None
        if ok:
            self.join(txn)
        self.send(msg.src, Kind.ACCESS_RESP, msg.txn, ok=ok)

    def _on_access_resp(self, msg: Message) -> None:
        ctx = self.coord.get(msg.txn)
        if ctx is None or ctx.phase is not CPhase.EXECUTING or msg.src not in ctx.pending_access:
            return
        ctx.pending_access.discard(msg.src)
        if msg.body["ok"]:
            ctx.granted.add(msg.src)
        else:
            ctx.exec_failed = True
        if not ctx.pending_access:
            self._exec_done(ctx)

    def _exec_done(self, ctx: CoordinatorState) -> None:
        self.cancel_timer(("exec", ctx.txn.id))
        if ctx.exec_failed:
            ctx.phase = CPhase.ABORTED_EARLY
            ctx.outcome = "ABORTED_EARLY"
            for p in sorted(ctx.granted):
                if p == self.id:
                    self._release(ctx.txn.id)
                else:
                    self.send(p, Kind.RELEASE, ctx.txn.id)
            del self.coord[ctx.txn.id]
            self.coordinated.pop(ctx.txn.id, None)
            if ctx.callback:
                ctx.callback(ctx)
            return
        self._ready(ctx)

    def _ready(self, ctx: CoordinatorState) -> None:
        txn = ctx.txn
        ctx.t_commit_start = self.now
        if self.ro_known and txn.read_only:
            # read-only and known to be: neither prepare nor commit phase
            ctx.skipped = True
            self.sim.begin(txn, None, skip=True)
            ctx.t_votes = self.now
            ctx.phase = CPhase.DECIDED
            ctx.decision = Decision.COMMIT
            self.reply(txn.id, Decision.COMMIT)
            ctx.t_reply = self.now
            for p in txn.participants:
                if p == self.id:
                    self._release(txn.id)
                else:
                    self.send(p, Kind.RELEASE, txn.id)
            self._coordinator_done(ctx)
            return
        self.coordinator_start(ctx)

    def _on_release(self, msg: Message) -> None:
        self._release(msg.txn)

    def _release(self, txn: TxnId) -> None:
        self.part.pop(txn, None)
        self.cancel_timer(("vote_req", txn))
        self.known.pop(txn, None)
        self.release_locks(txn)

    def release_locks(self, txn: TxnId) -> None:
        for key in self.locks.held_by(txn):
            self.locks.release(key, txn)

    # --- completion bookkeeping ---
    def _coordinator_done(self, ctx: CoordinatorState) -> None:
        self.coord.pop(ctx.txn.id, None)
        self.coordinated.pop(ctx.txn.id, None)
        ctx.outcome = ctx.decision.value
        if ctx.callback:
            ctx.callback(ctx)

    def finish(self, st: ParticipantState, decision: Decision) -> None:
        """Participant reached its final decision: release locks, report."""
        st.phase = PPhase.DONE
        st.final = decision
        self.decide(st.txn.id, decision, "participant")
        # forgotten only once the decision is taken: a crash just before it
        # must still find the txn on recovery
        self.known.pop(st.txn.id, None)
        self.release_locks(st.txn.id)

    def reply_decision(self, ctx: CoordinatorState, decision: Decision) -> None:
        ctx.decision = decision
        ctx.phase = CPhase.DECIDED
        self.reply(ctx.txn.id, decision)
        ctx.t_reply = self.now

    def on_exec_timer(self, key) -> bool:
        """Handle the execution-phase timer; True if ``key`` was one."""
        if key[0] != "exec":
            return False
        ctx = self.coord.get(key[1])
        if ctx is not None and ctx.phase is CPhase.EXECUTING:
            # a participant never answered (crashed): give up on the txn
            ctx.exec_failed = True
            ctx.pending_access.clear()
            self._exec_done(ctx)
        return True

    # --- dispatch ---
    def on_message(self, msg: Message) -> None:
        handler = {
            Kind.ACCESS: self._on_access,
            Kind.ACCESS_RESP: self._on_access_resp,
            Kind.RELEASE: self._on_release,
        }.get(msg.kind)
        if handler is None:
            handler = getattr(self, f"on_{msg.kind.value.lower()}")
        handler(msg)

    def on_crash(self) -> None:
        self.coord.clear()
        self.part.clear()
        self.locks = LockTable()

    def coordinator_start(self, ctx: CoordinatorState) -> None:
        raise NotImplementedError
