"""Exhaustive single-fault exploration of one distributed transaction.

Crash points are counted in atomic node actions (receive, send, storage
request, storage completion, timer, decide, reply), so crashing a node
"after k actions" for every k covers every protocol step it takes. Each
crash point is combined with per-node message-delay profiles (on time, or
late enough to race a timeout), with and without recovery, and with
all-yes or one-no voting.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from ..core import WRITE, Transaction, TxnId
from ..storage import FixedLatency, REDIS_CONDITIONAL_WRITE_US, StorageLatencyModel
from ..trace import Trace
from .engine import CrashSpec, FaultPlan, NetworkModel, StorageOutage, Timeouts
from .run import build

COORDINATOR_ROWS = {
    "C1": "before sending any VOTE-REQ",
    "C2": "after sending some VOTE-REQs",
    "C3": "after sending all VOTE-REQs, before sending any decision",
    "C4": "after sending some decisions",
    "C5": "after sending all decisions",
}
PARTICIPANT_ROWS = {
    "P1": "before receiving VOTE-REQ",
    "P2": "after receiving VOTE-REQ, before logging its vote",
    "P3": "after logging its vote, before replying",
    "P4": "after replying with its vote",
}


class ExplosionError(RuntimeError):
    pass


def explorer_txn(nodes: int) -> Transaction:
    """Node 0 coordinates; nodes 1..n-1 each write one key."""
    if not 2 <= nodes <= 5:
        raise ValueError("exploration supports 2 to 5 nodes (1 to 4 participants)")
    parts = tuple(range(1, nodes))
    return Transaction(TxnId(0, 1), 0, parts, {p: ((p, WRITE),) for p in parts})


def classify_crash(history: list[str], role: str, n_participants: int) -> str:
    if role == "coordinator":
        reqs = sum(h == "send:VOTE_REQ" for h in history)
        decs = sum(h == "send:DECISION" for h in history)
        if reqs == 0:
            return "C1"
        if reqs < n_participants:
            return "C2"
        if decs == 0:
            return "C3"
        return "C4" if decs < n_participants else "C5"
    if "recv:VOTE_REQ" not in history:
        return "P1"
    after = history[history.index("recv:VOTE_REQ"):]
    if not any(h.startswith("store:log") and ("VOTE_YES" in h or "ABORT" in h) for h in after):
        return "P2"
    return "P4" if "send:VOTE_RESP" in after else "P3"


@dataclass
class Exploration:
    protocol: str
    termination: Optional[str]
    traces: list[tuple[str, Trace]] = field(default_factory=list)
    rows: Counter = field(default_factory=Counter)

    def add(self, label: str, trace: Trace) -> None:
        self.traces.append((label, trace))
        self.rows[label] += 1


def explore(protocol: str, *, nodes: int = 3, termination: str = "cooperative", one_way: int = 250,
            storage: StorageLatencyModel = FixedLatency(REDIS_CONDITIONAL_WRITE_US),
            inject_bug: Optional[str] = None, cap: int = 50_000, recovery: bool = True,
            vote_patterns=("all-yes", "last-no"), delay_profiles: bool = True) -> Exploration:
    txn = explorer_txn(nodes)
    timeouts = Timeouts.default(one_way, storage)
    slow = timeouts.vote_wait + one_way
    ids = [txn.coordinator, *txn.participants]
    profiles = [()]
    if delay_profiles:
        profiles = [tuple(n for n, s in zip(ids, bits) if s)
                    for bits in itertools.product((False, True), repeat=len(ids))]
    recover_opts = [None, 2 * timeouts.longest()] if recovery else [None]
    result = Exploration(protocol, termination if protocol == "2pc" else None)
    seen: set[str] = set()

    def go(net, vote_no, faults):
        sim = build(protocol, [txn], net=net, storage=storage, faults=faults, timeouts=timeouts,
                    termination=termination, vote_no=vote_no, inject_bug=inject_bug)
        trace = sim.run()
        return sim, trace

    def keep(label, trace):
        digest = trace.digest()
        if digest in seen:
            return
        seen.add(digest)
        if len(seen) > cap:
            raise ExplosionError(f"more than {cap} distinct traces; shrink the instance or raise the cap")
        result.add(label, trace)

    for slow_nodes, pattern in itertools.product(profiles, vote_patterns):
        net = NetworkModel(one_way, node_delay={n: slow for n in slow_nodes})
        # "last-no": only the last participant votes no
        vote_no = () if pattern == "all-yes" else ((txn.participants[-1], txn.id),)
        base_sim, base = go(net, vote_no, FaultPlan())
        keep("fault-free", base)
        for node in ids:
            role = "coordinator" if node == txn.coordinator else "participant"
            for k in range(base_sim.nodes[node].actions + 1):
                for rec in recover_opts:
                    sim, trace = go(net, vote_no, FaultPlan((CrashSpec(node, after_actions=k, recover_after=rec),)))
                    hist = sim.nodes[node].crash_history
                    label = "none" if hist is None else classify_crash(hist, role, len(txn.participants))
                    keep(label, trace)
    return result


def storage_down_run(protocol: str = "cornus", *, nodes: int = 3, one_way: int = 250,
                     storage: StorageLatencyModel = FixedLatency(REDIS_CONDITIONAL_WRITE_US),
                     termination: str = "cooperative") -> Trace:
    """Storage becomes unreachable before any vote is logged and never comes
    back: the one situation in which Cornus cannot decide."""
    txn = explorer_txn(nodes)
    return build(protocol, [txn], storage=storage, net=NetworkModel(one_way), termination=termination,
                 faults=FaultPlan(outages=(StorageOutage(one_way + 1),))).run()
