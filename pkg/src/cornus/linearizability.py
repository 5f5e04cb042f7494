"""Linearizability checking for per-slot storage histories.

A history is a list of completed operations with real-time call and return
instants. ``is_linearizable`` searches for a total order that respects
real time (an operation that returned before another was called must come
first) and reproduces every observed result on a sequential slot
(Wing & Gong style backtracking, memoized on the set of placed operations
and the slot state). Histories here are small, so exhaustive search is fine.
"""
from __future__ import annotations

import random
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

from .core import LogState, RecordType, TxnId
from .storage import IllegalTransition, MemoryLogStore

ILLEGAL = "illegal"
ACK = "ack"


@dataclass(frozen=True)
class Op:
    call: float
    ret: float
    kind: str  # "log_once" | "log" | "read"
    rec: Optional[RecordType]
    result: object
    client: int = 0


# Sequential model: the slot is (vote, decision), each a RecordType or None.
_State = tuple


def _derived(state: _State) -> LogState:
    vote, decision = state
    if decision is not None:
        return LogState.COMMITTED if decision is RecordType.COMMIT else LogState.ABORTED
    if vote is not None:
        return LogState.VOTE_YES if vote is RecordType.VOTE_YES else LogState.ABORTED
    return LogState.NONE


def apply_model(state: _State, kind: str, rec: Optional[RecordType]) -> tuple[_State, object]:
    vote, decision = state
    if kind == "read":
        return state, _derived(state)
    if kind == "log_once":
        if vote is None and decision is None:
            state = (rec, None)
        return state, _derived(state)
    # plain log
    if rec is RecordType.VOTE_YES:
        if vote is None and decision is None:
            return (rec, None), ACK
        return (state, ACK) if vote is RecordType.VOTE_YES else (state, ILLEGAL)
    aborted = RecordType.ABORT in (vote, decision)
    if rec is RecordType.COMMIT:
        if aborted:
            return state, ILLEGAL
        return (state if decision is not None else (vote, rec)), ACK
    if decision is RecordType.COMMIT:
        return state, ILLEGAL
    if vote is None and decision is None:
        return (rec, None), ACK
    if aborted:
        return state, ACK
    return (vote, rec), ACK


def is_linearizable(history: Sequence[Op], initial: _State = (None, None)) -> Optional[list[int]]:
    """Return one valid linearization (indices into ``history``) or None."""
    ops = list(history)
    n = len(ops)
    if n > 20:
        raise ValueError("history too long for exhaustive search")
    # before[i]: ops that returned before op i was called
    before = [frozenset(j for j in range(n) if ops[j].ret < ops[i].call) for i in range(n)]

    @lru_cache(maxsize=None)
    def search(done: frozenset, state: _State) -> Optional[tuple[int, ...]]:
        if len(done) == n:
            return ()
        for i in range(n):
            if i in done or not before[i] <= done:
                continue
            nxt, result = apply_model(state, ops[i].kind, ops[i].rec)
            if result != ops[i].result:
                continue
            rest = search(done | {i}, nxt)
            if rest is not None:
                return (i, *rest)
        return None

    order = search(frozenset(), initial)
    return list(order) if order is not None else None


def _store_call(store: MemoryLogStore, log: str, txn: TxnId, kind: str, rec, writer: int):
    try:
        if kind == "log_once":
            return store.log_once(log, txn, rec, writer=writer)
        if kind == "log":
            store.log(log, txn, rec, writer=writer)
            return ACK
        return store.read_state(log, txn)
    except IllegalTransition:
        return ILLEGAL


def _random_op(rng: random.Random, mixed: bool = False) -> tuple[str, Optional[RecordType]]:
    r = rng.random() if mixed else 0.0
    if r < 0.7:
        return "log_once", rng.choice((RecordType.VOTE_YES, RecordType.ABORT))
    if r < 0.9:
        return "log", rng.choice((RecordType.VOTE_YES, RecordType.ABORT, RecordType.COMMIT))
    return "read", None


@dataclass
class ScheduleResult:
    history: list[Op]
    votes_written: int
    linearization: Optional[list[int]]


def random_schedule(rng: random.Random, writers: int = 8, horizon: float = 10.0,
                    mixed: bool = False) -> ScheduleResult:
    """Run ``writers`` overlapping LogOnce calls (or, with ``mixed``, a mix of
    LogOnce, Log and reads) against one slot of the in-memory store. Each op
    gets a random [call, ret] interval and takes effect at a uniformly random
    instant inside it; the store is driven in
    effect order, then the history (intervals and results only) is checked."""
    store = MemoryLogStore()
    txn = TxnId(0, 1)
    planned = []
    for w in range(writers):
        call = rng.uniform(0, horizon)
        ret = call + rng.uniform(0, horizon / 2)
        at = rng.uniform(call, ret)
        kind, rec = _random_op(rng, mixed)
        planned.append((at, w, call, ret, kind, rec))
    history = []
    for at, w, call, ret, kind, rec in sorted(planned):
        result = _store_call(store, "1", txn, kind, rec, w)
        history.append(Op(call, ret, kind, rec, result, w))
    history.sort(key=lambda op: op.client)
    votes = sum(1 for _, _, f, _ in store.writes if f == "vote")
    return ScheduleResult(history, votes, is_linearizable(history))


def threaded_history(writers: int = 8, seed: int = 0, mixed: bool = False) -> tuple[list[Op], int]:
    """Same experiment with real threads racing on the store; intervals come
    from a shared logical counter read before and after each call."""
    store = MemoryLogStore()
    txn = TxnId(0, 1)
    rng = random.Random(seed)
    plan = [_random_op(rng, mixed) for _ in range(writers)]
    ticks = iter(range(1_000_000))
    tick_lock = threading.Lock()
    start = threading.Barrier(writers)
    history: list[Optional[Op]] = [None] * writers

    def tick() -> int:
        with tick_lock:
            return next(ticks)

    def worker(w: int) -> None:
        kind, rec = plan[w]
        start.wait()
        call = tick()
        result = _store_call(store, "1", txn, kind, rec, w)
        history[w] = Op(call, tick(), kind, rec, result, w)

    threads = [threading.Thread(target=worker, args=(w,)) for w in range(writers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    votes = sum(1 for _, _, f, _ in store.writes if f == "vote")
    return list(history), votes
