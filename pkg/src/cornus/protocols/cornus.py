"""Cornus: 2PC whose outcome is fixed by the participants' logged votes.

The coordinator never logs; it replies to the caller as soon as the votes
settle the outcome. A node that times out resolves the transaction itself by
LogOnce(ABORT)-ing every other participant's log.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..core import Decision, LogState, RecordType, TxnId, participant_log
from ..messages import Kind, Message
from ..sim.engine import ACK, UNAVAILABLE
from .base import CoordinatorState, CPhase, ParticipantState, PPhase, ProtocolNode

COORDINATOR = "coordinator"
PARTICIPANT = "participant"

# Mutation switch for checker-sensitivity tests: the termination protocol
# uses plain Log(ABORT) instead of LogOnce(ABORT).
BUG_SKIP_LOGONCE = "skip-logonce"


@dataclass
class _Termination:
    txn: TxnId
    role: str
    targets: tuple[int, ...]
    attempt: int = 0
    yes: set = field(default_factory=set)


class CornusNode(ProtocolNode):
    protocol = "cornus"

    def __init__(self, node_id, timeouts, *, inject_bug: Optional[str] = None, **kw):
        super().__init__(node_id, timeouts, **kw)
        if inject_bug not in (None, BUG_SKIP_LOGONCE):
            raise ValueError(f"unknown bug {inject_bug!r}")
        self.inject_bug = inject_bug
        self.terms: dict[tuple[TxnId, str], _Termination] = {}

    # --- coordinator ---
    def coordinator_start(self, ctx: CoordinatorState) -> None:
        txn = ctx.txn
        self.sim.begin(txn, None)
        ctx.phase = CPhase.SENDING_VOTE_REQ
        for p in txn.participants:
            self.send(p, Kind.VOTE_REQ, txn.id, participants=list(txn.participants))
        ctx.phase = CPhase.AWAITING_VOTES
        self.set_timer(("votes", txn.id), self.timeouts.vote_wait)

    def on_vote_resp(self, msg: Message) -> None:
        ctx = self.coord.get(msg.txn)
        if ctx is None or ctx.phase is not CPhase.AWAITING_VOTES:
            return
        if msg.body["vote"] == "abort":
            self._coordinator_decide(ctx, Decision.ABORT)
            return
        ctx.votes[msg.src] = "yes"
        if len(ctx.votes) == len(ctx.txn.participants):
            self._coordinator_decide(ctx, Decision.COMMIT)

    def _coordinator_decide(self, ctx: CoordinatorState, decision: Decision) -> None:
        txn = ctx.txn
        self.cancel_timer(("votes", txn.id))
        self._drop_termination(txn.id, COORDINATOR)
        ctx.t_votes = self.now
        self.reply_decision(ctx, decision)
        for p in txn.participants:
            self.send(p, Kind.DECISION, txn.id, decision=decision.value)
        self.coord.pop(txn.id, None)
        self.coordinated.pop(txn.id, None)
        self._coordinator_done(ctx)

    # --- participant ---
    def on_vote_req(self, msg: Message) -> None:
        st = self.part.get(msg.txn)
        if st is None or st.phase is not PPhase.AWAITING_VOTE_REQ:
            return  # late or duplicate; the slot's write-once state governs
        self.cancel_timer(("vote_req", msg.txn))
        if self.votes_yes(msg.txn):
            st.local_vote = "yes"
            st.phase = PPhase.LOGGING_VOTE
            self.storage("log_once", self.own_log, msg.txn, RecordType.VOTE_YES, tag=("vote", msg.txn))
        else:
            st.local_vote = "no"
            self.storage("log", self.own_log, msg.txn, RecordType.ABORT, tag=("async", msg.txn))
            self.send(st.txn.coordinator, Kind.VOTE_RESP, msg.txn, vote="abort")
            self.finish(st, Decision.ABORT)

    def _on_vote_logged(self, st: ParticipantState, result) -> None:
        txn = st.txn.id
        if result == UNAVAILABLE:
            self.set_timer(("vote_retry", txn), self.timeouts.storage_retry, timeout=False)
            return
        if result is LogState.ABORTED:
            # another node already logged ABORT on our behalf
            self.send(st.txn.coordinator, Kind.VOTE_RESP, txn, vote="abort")
            self.finish(st, Decision.ABORT)
            return
        if result is not LogState.VOTE_YES:
            raise AssertionError(f"LogOnce(VOTE_YES) on an undecided slot returned {result}")
        self.send(st.txn.coordinator, Kind.VOTE_RESP, txn, vote="yes")
        st.phase = PPhase.AWAITING_DECISION
        self.set_timer(("decision", txn), self.timeouts.decision_wait)

    def on_decision(self, msg: Message) -> None:
        st = self.part.get(msg.txn)
        if st is None or st.phase not in (PPhase.AWAITING_DECISION, PPhase.TERMINATING):
            return
        self.cancel_timer(("decision", msg.txn))
        self._drop_termination(msg.txn, PARTICIPANT)
        self._learn(st, Decision(msg.body["decision"]))

    def _learn(self, st: ParticipantState, decision: Decision) -> None:
        st.phase = PPhase.LOGGING_DECISION
        st.final = decision
        self.storage("log", self.own_log, st.txn.id, decision.record, tag=("decision", st.txn.id))

    def _on_decision_logged(self, st: ParticipantState, result) -> None:
        if result == UNAVAILABLE:
            self.set_timer(("decision_retry", st.txn.id), self.timeouts.storage_retry, timeout=False)
            return
        self.finish(st, st.final)

    def _unilateral_abort(self, st: ParticipantState) -> None:
        st.phase = PPhase.ABORTING
        self.storage("log", self.own_log, st.txn.id, RecordType.ABORT, tag=("unilateral", st.txn.id))

    # --- termination protocol ---
    def terminate(self, txn: TxnId, role: str, targets) -> None:
        key = (txn, role)
        term = self.terms.get(key)
        if term is None:
            term = self.terms[key] = _Termination(txn, role, tuple(targets))
        term.attempt += 1
        term.yes = set()
        if not term.targets:
            self._resolve(term, Decision.COMMIT)
            return
        for p in term.targets:
            tag = ("term", txn, role, term.attempt, p)
            if self.inject_bug == BUG_SKIP_LOGONCE:
                self.storage("log", participant_log(p), txn, RecordType.ABORT, tag=tag)
            else:
                self.storage("log_once", participant_log(p), txn, RecordType.ABORT, tag=tag)
        self.set_timer(("term", txn, role), self.timeouts.termination_wait)

    def _on_term_response(self, tag, result) -> None:
        _, txn, role, attempt, p = tag
        term = self.terms.get((txn, role))
        if term is None or term.attempt != attempt:
            return
        if result is LogState.ABORTED or result == ACK:
            # ACK only under the injected bug: a blind Log(ABORT) "enforced" abort
            self._resolve(term, Decision.ABORT)
        elif result is LogState.COMMITTED:
            self._resolve(term, Decision.COMMIT)
        elif result is LogState.VOTE_YES:
            term.yes.add(p)
            if len(term.yes) == len(term.targets):
                self._resolve(term, Decision.COMMIT)
        # UNAVAILABLE / ILLEGAL: wait for the timeout and retry

    def _resolve(self, term: _Termination, decision: Decision) -> None:
        self._drop_termination(term.txn, term.role)
        if term.role == COORDINATOR:
            ctx = self.coord.get(term.txn)
            if ctx is not None and ctx.phase is CPhase.TERMINATING:
                self._coordinator_decide(ctx, decision)
        else:
            st = self.part.get(term.txn)
            if st is not None and st.phase is PPhase.TERMINATING:
                self._learn(st, decision)

    def _drop_termination(self, txn: TxnId, role: str) -> None:
        if self.terms.pop((txn, role), None) is not None:
            self.cancel_timer(("term", txn, role))

    # --- recovery ---
    def on_recover(self) -> None:
        # the coordinator role keeps no state and needs nothing here
        for txn_id, txn in sorted(self.known.items()):
            self.part[txn_id] = ParticipantState(txn, PPhase.RECOVERING)
            self.storage("read", self.own_log, txn_id, tag=("recover", txn_id))

    def participant_recover(self, st: ParticipantState, result) -> None:
        txn = st.txn.id
        if result == UNAVAILABLE:
            self.set_timer(("recover_retry", txn), self.timeouts.storage_retry, timeout=False)
        elif result is LogState.NONE:
            # never voted: make the abort durable; the answer tells us the truth
            self.storage("log_once", self.own_log, txn, RecordType.ABORT, tag=("recover", txn))
        elif result is LogState.ABORTED:
            self.finish(st, Decision.ABORT)
        elif result is LogState.COMMITTED:
            self.finish(st, Decision.COMMIT)
        else:
            st.phase = PPhase.TERMINATING
            self.terminate(txn, PARTICIPANT, [p for p in st.txn.participants if p != self.id])

    # --- dispatch ---
    def on_storage(self, tag, op, result) -> None:
        what, txn = tag[0], tag[1]
        if what == "term":
            self._on_term_response(tag, result)
            return
        if what == "async":
            return
        st = self.part.get(txn)
        if st is None:
            return
        if what == "vote" and st.phase is PPhase.LOGGING_VOTE:
            self._on_vote_logged(st, result)
        elif what == "decision" and st.phase is PPhase.LOGGING_DECISION:
            self._on_decision_logged(st, result)
        elif what == "unilateral" and st.phase is PPhase.ABORTING:
            if result == UNAVAILABLE:
                self.set_timer(("unilateral_retry", txn), self.timeouts.storage_retry, timeout=False)
            else:
                self.finish(st, Decision.ABORT)
        elif what == "recover" and st.phase is PPhase.RECOVERING:
            self.participant_recover(st, result)

    def on_timer(self, key) -> None:
        if self.on_exec_timer(key):
            return
        what, txn = key[0], key[1]
        if what == "votes":
            ctx = self.coord.get(txn)
            if ctx is not None and ctx.phase is CPhase.AWAITING_VOTES:
                ctx.phase = CPhase.TERMINATING
                self.terminate(txn, COORDINATOR, ctx.txn.participants)
            return
        if what == "term":
            term = self.terms.get((txn, key[2]))
            if term is not None:
                self.terminate(txn, term.role, term.targets)
            return
        st = self.part.get(txn)
        if st is None:
            return
        if what == "vote_req" and st.phase is PPhase.AWAITING_VOTE_REQ:
            self._unilateral_abort(st)
        elif what == "decision" and st.phase is PPhase.AWAITING_DECISION:
            st.phase = PPhase.TERMINATING
            self.terminate(txn, PARTICIPANT, [p for p in st.txn.participants if p != self.id])
        elif what == "vote_retry" and st.phase is PPhase.LOGGING_VOTE:
            self.storage("log_once", self.own_log, txn, RecordType.VOTE_YES, tag=("vote", txn))
        elif what == "decision_retry" and st.phase is PPhase.LOGGING_DECISION:
            self.storage("log", self.own_log, txn, st.final.record, tag=("decision", txn))
        elif what == "unilateral_retry" and st.phase is PPhase.ABORTING:
            self._unilateral_abort(st)
        elif what == "recover_retry" and st.phase is PPhase.RECOVERING:
            self.storage("read", self.own_log, txn, tag=("recover", txn))

    def on_crash(self) -> None:
        super().on_crash()
        self.terms.clear()
