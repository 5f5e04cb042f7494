"""Conventional presumed-abort 2PC over the same disaggregated log service.

The coordinator's decision record (in its own log) is the ground truth, and
the caller gets the outcome only after a COMMIT record is durable. A
participant stuck after voting yes either waits for the coordinator (naive
termination) or also asks its peers (cooperative termination).
"""
from __future__ import annotations

from ..core import Decision, LogState, RecordType, TxnId, coordinator_log
from ..messages import Kind, Message
from ..sim.engine import UNAVAILABLE
from .base import CoordinatorState, CPhase, ParticipantState, PPhase, ProtocolNode

NAIVE = "naive"
COOPERATIVE = "cooperative"
UNCERTAIN = "uncertain"


class TwoPCNode(ProtocolNode):
    protocol = "2pc"

    def __init__(self, node_id, timeouts, *, termination: str = COOPERATIVE, **kw):
        super().__init__(node_id, timeouts, **kw)
        if termination not in (NAIVE, COOPERATIVE):
            raise ValueError(f"unknown termination mode {termination!r}")
        self.termination = termination
        self.outcomes: dict[TxnId, Decision] = {}  # coordinator's volatile memory of decisions

    @property
    def decision_log(self) -> str:
        return coordinator_log(self.id)

    # --- coordinator ---
    def coordinator_start(self, ctx: CoordinatorState) -> None:
        txn = ctx.txn
        self.sim.begin(txn, self.decision_log)
        ctx.phase = CPhase.SENDING_VOTE_REQ
        for p in txn.participants:
            self.send(p, Kind.VOTE_REQ, txn.id, participants=list(txn.participants))
        ctx.phase = CPhase.AWAITING_VOTES
        self.set_timer(("votes", txn.id), self.timeouts.vote_wait)

    def on_vote_resp(self, msg: Message) -> None:
        ctx = self.coord.get(msg.txn)
        if ctx is None or ctx.phase is not CPhase.AWAITING_VOTES:
            return
        vote = msg.body["vote"]
        if vote == "abort":
            self._abort(ctx)
            return
        ctx.votes[msg.src] = vote
        if len(ctx.votes) < len(ctx.txn.participants):
            return
        self.cancel_timer(("votes", ctx.txn.id))
        ctx.t_votes = self.now
        if all(v == "read_only" for v in ctx.votes.values()):
            self._announce(ctx, Decision.COMMIT)
            return
        ctx.phase = CPhase.LOGGING_DECISION
        self.storage("log", self.decision_log, ctx.txn.id, RecordType.COMMIT, tag=("coord_commit", ctx.txn.id))

    def _abort(self, ctx: CoordinatorState) -> None:
        # presumed abort: the ABORT record is written lazily
        self.cancel_timer(("votes", ctx.txn.id))
        if ctx.t_votes is None:
            ctx.t_votes = self.now
        self.storage("log", self.decision_log, ctx.txn.id, RecordType.ABORT, tag=("async", ctx.txn.id))
        self._announce(ctx, Decision.ABORT)

    def _announce(self, ctx: CoordinatorState, decision: Decision) -> None:
        txn = ctx.txn
        self.outcomes[txn.id] = decision
        self.reply_decision(ctx, decision)
        for p in txn.participants:
            if ctx.votes.get(p) != "read_only":
                self.send(p, Kind.DECISION, txn.id, decision=decision.value)
        self.coord.pop(txn.id, None)
        self.coordinated.pop(txn.id, None)
        self._coordinator_done(ctx)

    def twopc_coordinator_recover(self, txn_id: TxnId, state) -> None:
        if state == UNAVAILABLE:
            self.set_timer(("coord_recover_retry", txn_id), self.timeouts.storage_retry, timeout=False)
            return
        if state is LogState.COMMITTED:
            decision = Decision.COMMIT
        else:
            decision = Decision.ABORT
            if state is LogState.NONE:
                self.storage("log", self.decision_log, txn_id, RecordType.ABORT, tag=("async", txn_id))
        txn = self.coordinated.pop(txn_id)
        self.outcomes[txn_id] = decision
        self.decide(txn_id, decision, "coordinator")
        for p in txn.participants:
            self.send(p, Kind.DECISION, txn_id, decision=decision.value)

    # --- participant ---
    def on_vote_req(self, msg: Message) -> None:
        st = self.part.get(msg.txn)
        if st is None or st.phase is not PPhase.AWAITING_VOTE_REQ:
            return
        self.cancel_timer(("vote_req", msg.txn))
        txn = st.txn
        if txn.read_only_at(self.id):
            # read-only participant: no log record, leaves the protocol now
            st.local_vote = "read_only"
            st.phase = PPhase.DONE
            self.known.pop(txn.id, None)
            self.release_locks(txn.id)
            self.sim.note(self, "RO_VOTE", txn=str(txn.id))
            self.send(txn.coordinator, Kind.VOTE_RESP, txn.id, vote="read_only")
        elif self.votes_yes(msg.txn):
            st.local_vote = "yes"
            st.phase = PPhase.LOGGING_VOTE
            self.storage("log", self.own_log, txn.id, RecordType.VOTE_YES, tag=("vote", txn.id))
        else:
            st.local_vote = "no"
            self.storage("log", self.own_log, txn.id, RecordType.ABORT, tag=("async", txn.id))
            self.send(txn.coordinator, Kind.VOTE_RESP, txn.id, vote="abort")
            self.finish(st, Decision.ABORT)

    def on_decision(self, msg: Message) -> None:
        st = self.part.get(msg.txn)
        if st is None or st.phase not in (PPhase.AWAITING_DECISION, PPhase.TERMINATING):
            return
        self._learn(st, Decision(msg.body["decision"]))

    def _learn(self, st: ParticipantState, decision: Decision) -> None:
        self.cancel_timer(("decision", st.txn.id))
        self.cancel_timer(("term", st.txn.id))
        st.phase = PPhase.LOGGING_DECISION
        st.final = decision
        self.storage("log", self.own_log, st.txn.id, decision.record, tag=("decision", st.txn.id))

    def cooperative_termination(self, st: ParticipantState) -> None:
        """Ask who may know the outcome; unanswered rounds are retried (the
        transaction stays blocked meanwhile)."""
        st.phase = PPhase.TERMINATING
        txn = st.txn
        targets = [txn.coordinator]
        if self.termination == COOPERATIVE:
            targets += [p for p in txn.participants if p not in (self.id, txn.coordinator)]
        for p in targets:
            if p != self.id:
                self.send(p, Kind.DECISION_REQ, txn.id)
        self.set_timer(("term", txn.id), self.timeouts.termination_wait)

    def on_decision_req(self, msg: Message) -> None:
        txn = msg.txn
        if txn in self.outcomes:
            self.send(msg.src, Kind.DECISION_RESP, txn, outcome=self.outcomes[txn].value)
            return
        if txn.coordinator_node == self.id and txn not in self.coord and txn not in self.coordinated:
            # forgotten after a restart: the decision log answers, and no
            # record means abort
            self.storage("read", self.decision_log, txn, tag=("answer", txn, msg.src))
            return
        st = self.part.get(txn)
        if st is None:
            return
        if st.phase is PPhase.DONE:
            if st.final is not None:
                self.send(msg.src, Kind.DECISION_RESP, txn, outcome=st.final.value)
        elif st.phase is PPhase.AWAITING_VOTE_REQ:
            # not yet voted, so free to abort, which settles it for everyone
            self.cancel_timer(("vote_req", txn))
            self.storage("log", self.own_log, txn, RecordType.ABORT, tag=("async", txn))
            self.finish(st, Decision.ABORT)
            self.send(msg.src, Kind.DECISION_RESP, txn, outcome=Decision.ABORT.value)
        elif st.phase is not PPhase.RECOVERING:
            self.send(msg.src, Kind.DECISION_RESP, txn, outcome=UNCERTAIN)

    def on_decision_resp(self, msg: Message) -> None:
        st = self.part.get(msg.txn)
        outcome = msg.body["outcome"]
        if st is None or st.phase is not PPhase.TERMINATING or outcome == UNCERTAIN:
            return
        self._learn(st, Decision(outcome))

    # --- recovery ---
    def on_recover(self) -> None:
        for txn_id in sorted(self.coordinated):
            self.storage("read", self.decision_log, txn_id, tag=("coord_recover", txn_id))
        for txn_id, txn in sorted(self.known.items()):
            self.part[txn_id] = ParticipantState(txn, PPhase.RECOVERING)
            self.storage("read", self.own_log, txn_id, tag=("recover", txn_id))

    def _participant_recover(self, st: ParticipantState, state) -> None:
        txn = st.txn.id
        if state == UNAVAILABLE:
            self.set_timer(("recover_retry", txn), self.timeouts.storage_retry, timeout=False)
        elif state is LogState.NONE:
            self.storage("log", self.own_log, txn, RecordType.ABORT, tag=("async", txn))
            self.finish(st, Decision.ABORT)
        elif state is LogState.ABORTED:
            self.finish(st, Decision.ABORT)
        elif state is LogState.COMMITTED:
            self.finish(st, Decision.COMMIT)
        else:
            self.cooperative_termination(st)

    # --- dispatch ---
    def on_storage(self, tag, op, result) -> None:
        what, txn = tag[0], tag[1]
        if what == "async":
            return
        if what == "answer":
            if result != UNAVAILABLE:
                outcome = Decision.COMMIT if result is LogState.COMMITTED else Decision.ABORT
                self.send(tag[2], Kind.DECISION_RESP, txn, outcome=outcome.value)
            return
        if what == "coord_commit":
            ctx = self.coord.get(txn)
            if ctx is None or ctx.phase is not CPhase.LOGGING_DECISION:
                return
            if result == UNAVAILABLE:
                self.set_timer(("coord_commit_retry", txn), self.timeouts.storage_retry, timeout=False)
            else:
                self._announce(ctx, Decision.COMMIT)
            return
        if what == "coord_recover":
            if txn in self.coordinated:
                self.twopc_coordinator_recover(txn, result)
            return
        st = self.part.get(txn)
        if st is None:
            return
        retry = result == UNAVAILABLE
        if what == "vote" and st.phase is PPhase.LOGGING_VOTE:
            if retry:
                self.set_timer(("vote_retry", txn), self.timeouts.storage_retry, timeout=False)
                return
            self.send(st.txn.coordinator, Kind.VOTE_RESP, txn, vote="yes")
            st.phase = PPhase.AWAITING_DECISION
            self.set_timer(("decision", txn), self.timeouts.decision_wait)
        elif what == "decision" and st.phase is PPhase.LOGGING_DECISION:
            if retry:
                self.set_timer(("decision_retry", txn), self.timeouts.storage_retry, timeout=False)
                return
            self.finish(st, st.final)
        elif what == "unilateral" and st.phase is PPhase.ABORTING:
            if retry:
                self.set_timer(("unilateral_retry", txn), self.timeouts.storage_retry, timeout=False)
                return
            self.finish(st, Decision.ABORT)
        elif what == "recover" and st.phase is PPhase.RECOVERING:
            self._participant_recover(st, result)

    def on_timer(self, key) -> None:
        if self.on_exec_timer(key):
            return
        what, txn = key[0], key[1]
        if what == "votes":
            ctx = self.coord.get(txn)
            if ctx is not None and ctx.phase is CPhase.AWAITING_VOTES:
                self._abort(ctx)
            return
        if what == "coord_commit_retry":
            ctx = self.coord.get(txn)
            if ctx is not None and ctx.phase is CPhase.LOGGING_DECISION:
                self.storage("log", self.decision_log, txn, RecordType.COMMIT, tag=("coord_commit", txn))
            return
        if what == "coord_recover_retry":
            if txn in self.coordinated:
                self.storage("read", self.decision_log, txn, tag=("coord_recover", txn))
            return
        st = self.part.get(txn)
        if st is None:
            return
        if what == "vote_req" and st.phase is PPhase.AWAITING_VOTE_REQ:
            st.phase = PPhase.ABORTING
            self.storage("log", self.own_log, txn, RecordType.ABORT, tag=("unilateral", txn))
        elif what in ("decision", "term") and st.phase in (PPhase.AWAITING_DECISION, PPhase.TERMINATING):
            self.cooperative_termination(st)
        elif what == "vote_retry" and st.phase is PPhase.LOGGING_VOTE:
            self.storage("log", self.own_log, txn, RecordType.VOTE_YES, tag=("vote", txn))
        elif what == "decision_retry" and st.phase is PPhase.LOGGING_DECISION:
            self.storage("log", self.own_log, txn, st.final.record, tag=("decision", txn))
        elif what == "unilateral_retry" and st.phase is PPhase.ABORTING:
            self.storage("log", self.own_log, txn, RecordType.ABORT, tag=("unilateral", txn))
        elif what == "recover_retry" and st.phase is PPhase.RECOVERING:
            self.storage("read", self.own_log, txn, tag=("recover", txn))

    def on_crash(self) -> None:
        super().on_crash()
        self.outcomes.clear()
