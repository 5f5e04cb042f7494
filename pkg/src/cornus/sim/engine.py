"""Deterministic discrete-event engine: virtual clock (integer µs), message
delivery, timers, storage requests with modeled latency, crash/recovery
injection, and trace recording."""
from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Mapping, Optional

from ..core import Decision, LogState, RecordType, Transaction, TxnId
from ..messages import Kind, Message
from ..storage import (FixedLatency, IllegalTransition, MemoryLogStore, StorageLatencyModel,
                       StorageUnavailable)
from ..trace import Trace

UNAVAILABLE = "unavailable"
ILLEGAL = "illegal"
ACK = "ack"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkModel:
    """One-way delay per message; ``node_delay`` overrides it for messages
    sent by a given node. Self-addressed messages are delivered at once."""

    one_way: int = 250
    jitter: int = 0
    node_delay: Mapping[int, int] = field(default_factory=dict)

    def delay(self, src: int, dst: int, rng: random.Random) -> int:
        if src == dst:
            return 0
        base = self.node_delay.get(src, self.one_way)
        return base + (rng.randint(0, self.jitter) if self.jitter else 0)

    def max_delay(self) -> int:
        return max([self.one_way, *self.node_delay.values()]) + self.jitter


def storage_write_latency(model: StorageLatencyModel) -> int:
    return model.timing("log")[1]


@dataclass(frozen=True)
class Timeouts:
    vote_wait: int
    decision_wait: int
    termination_wait: int
    storage_retry: int

    @classmethod
    def default(cls, one_way: int, storage: StorageLatencyModel, factor: int = 5) -> "Timeouts":
        # one message round plus one storage write, times a safety factor
        base = 2 * one_way + storage_write_latency(storage)
        return cls(factor * base, factor * base, factor * base, base)

    def longest(self) -> int:
        return max(self.vote_wait, self.decision_wait, self.termination_wait)


@dataclass(frozen=True)
class CrashSpec:
    """Crash ``node`` either after it has performed ``after_actions`` atomic
    actions (a symbolic protocol step) or at virtual time ``at_time``;
    optionally recover ``recover_after`` µs later."""

    node: int
    after_actions: Optional[int] = None
    at_time: Optional[int] = None
    recover_after: Optional[int] = None

    def __post_init__(self):
        if (self.after_actions is None) == (self.at_time is None):
            raise ConfigError("a crash needs exactly one of after_actions / at_time")


@dataclass(frozen=True)
class StorageOutage:
    start: int
    end: Optional[int] = None


@dataclass(frozen=True)
class FaultPlan:
    crashes: tuple[CrashSpec, ...] = ()
    outages: tuple[StorageOutage, ...] = ()

    @classmethod
    def parse(cls, text: str) -> "FaultPlan":
        """Comma-separated items: ``N:after=K[:recover=R]``, ``N:at=T[:recover=R]``
        or ``storage:down=T[:up=T2]``."""
        crashes, outages = [], []
        for item in filter(None, (s.strip() for s in text.split(","))):
            head, *opts = item.split(":")
            kv = {}
            for opt in opts:
                k, sep, v = opt.partition("=")
                if not sep:
                    raise ConfigError(f"bad fault option {opt!r} in {item!r}")
                kv[k] = int(v)
            if head == "storage":
                if "down" not in kv:
                    raise ConfigError(f"storage fault needs down=T: {item!r}")
                outages.append(StorageOutage(kv["down"], kv.get("up")))
                continue
            try:
                node = int(head)
            except ValueError:
                raise ConfigError(f"bad fault target {head!r}") from None
            crashes.append(CrashSpec(node, kv.get("after"), kv.get("at"), kv.get("recover")))
        return cls(tuple(crashes), tuple(outages))

    def is_empty(self) -> bool:
        return not self.crashes and not self.outages


class NodeCrashed(Exception):
    """Unwinds a handler interrupted by an injected crash."""


@dataclass
class _StorageRequest:
    id: int
    node: int
    incarnation: int
    op: str
    log: str
    txn: TxnId
    rec: Optional[RecordType]
    tag: Any
    issued: int
    result: Any = None


class Node:
    """A compute node: a single-threaded event handler. Subclasses implement
    ``on_message``, ``on_timer``, ``on_storage``, ``on_crash`` and
    ``on_recover``; everything they do to the outside world goes through the
    action helpers so crash points can interrupt between any two of them."""

    def __init__(self, node_id: int):
        self.id = node_id
        self.sim: Optional["Simulator"] = None
        self.crashed = False
        self.incarnation = 0
        self.actions = 0
        self.history: list[str] = []
        self.crash_history: Optional[list[str]] = None
        self.crash_after: Optional[int] = None
        self._timers: dict[Hashable, int] = {}
        self._timer_ids = itertools.count(1)

    # --- crash-point accounting ---
    def _act(self, label: str) -> None:
        if self.crash_after is not None and self.actions == self.crash_after:
            self.sim.crash_node(self.id)
            raise NodeCrashed
        self.actions += 1
        self.history.append(label)

    def _end_handler(self) -> None:
        if not self.crashed and self.crash_after is not None and self.actions == self.crash_after:
            self.sim.crash_node(self.id)

    @property
    def now(self) -> int:
        return self.sim.now

    # --- actions ---
    def send(self, dst: int, kind: Kind, txn: TxnId, **body) -> None:
        self._act(f"send:{kind.value}")
        self.sim.send(Message(kind, txn, self.id, dst, body))

    def set_timer(self, key: Hashable, delay: int, timeout: bool = True) -> None:
        tid = next(self._timer_ids)
        self._timers[key] = tid
        self.sim.schedule(self.now + delay, self.sim._fire_timer, self.id, self.incarnation, key, tid, timeout)

    def cancel_timer(self, key: Hashable) -> None:
        self._timers.pop(key, None)

    def storage(self, op: str, log: str, txn: TxnId, rec: Optional[RecordType] = None, tag: Any = None) -> None:
        self._act(f"store:{op}:{rec.name if rec is not None else '-'}:{log}")
        self.sim.storage_request(self, op, log, txn, rec, tag)

    def decide(self, txn: TxnId, decision: Decision, role: str) -> None:
        self._act(f"decide:{role}:{decision.value}")
        self.sim.trace.add(self.now, self.id, "DECIDE", txn=str(txn), decision=decision.value, role=role)

    def reply(self, txn: TxnId, decision: Decision) -> None:
        """Return the outcome to the transaction's caller (coordinator only)."""
        self._act(f"reply:{decision.value}")
        self.sim.trace.add(self.now, self.id, "REPLY_TO_CALLER", txn=str(txn), decision=decision.value)
        self.sim.trace.add(self.now, self.id, "DECIDE", txn=str(txn), decision=decision.value, role="coordinator")
        self.sim.on_reply(self, txn, decision)

    # --- handlers ---
    def on_message(self, msg: Message) -> None:
        raise NotImplementedError

    def on_timer(self, key: Hashable) -> None:
        raise NotImplementedError

    def on_storage(self, tag: Any, op: str, result: Any) -> None:
        raise NotImplementedError

    def on_crash(self) -> None:
        """Discard volatile state."""

    def on_recover(self) -> None:
        pass


class Simulator:
    def __init__(self, *, net: NetworkModel = NetworkModel(), storage: StorageLatencyModel = FixedLatency(1960),
                 timeouts: Optional[Timeouts] = None, faults: FaultPlan = FaultPlan(), seed: int = 0,
                 horizon: Optional[int] = None, header: Optional[dict] = None):
        self.net = net
        self.storage_model = storage
        self.timeouts = timeouts or Timeouts.default(net.one_way, storage)
        self.faults = faults
        self.rng = random.Random(seed)
        self.horizon = horizon
        self.now = 0
        self._queue: list = []
        self._seq = itertools.count()
        self._req_ids = itertools.count(1)
        self._applying: Optional[_StorageRequest] = None
        self.nodes: dict[int, Node] = {}
        self.trace = Trace(dict(header or {}))
        self.store = MemoryLogStore(clock=lambda: self.now, on_write=self._on_slot_write)
        self.reply_listeners: list[Callable[[Node, TxnId, Decision], None]] = []
        self._started = False

    # --- setup ---
    def add_node(self, node: Node) -> Node:
        node.sim = self
        self.nodes[node.id] = node
        return node

    def _install_faults(self) -> None:
        for c in self.faults.crashes:
            if c.node not in self.nodes:
                raise ConfigError(f"fault plan names unknown node {c.node}")
            if c.after_actions is not None:
                if c.after_actions < 0:
                    raise ConfigError("after_actions must be >= 0")
                self.nodes[c.node].crash_after = c.after_actions
            else:
                self.schedule(c.at_time, self.crash_node, c.node)
        for o in self.faults.outages:
            self.schedule(o.start, self._storage_down)
            if o.end is not None:
                self.schedule(o.end, self._storage_up)

    def schedule(self, at: int, fn: Callable, *args) -> None:
        if at < self.now:
            raise ValueError(f"cannot schedule in the past ({at} < {self.now})")
        heapq.heappush(self._queue, (at, next(self._seq), fn, args))

    def invoke(self, node_id: int, fn: Callable, *args) -> None:
        """Run a node handler atomically unless the node is down."""
        node = self.nodes[node_id]
        if node.crashed:
            return
        try:
            fn(*args)
            node._end_handler()
        except NodeCrashed:
            pass

    def run(self) -> Trace:
        if not self._started:
            self._started = True
            self._install_faults()
        while self._queue:
            at = self._queue[0][0]
            if self.horizon is not None and at > self.horizon:
                break
            _, _, fn, args = heapq.heappop(self._queue)
            self.now = at
            fn(*args)
        self.trace.add(self.now, None, "END", pending=len(self._queue))
        return self.trace

    # --- transactions ---
    def begin(self, txn: Transaction, decision_log: Optional[str], skip: bool = False) -> None:
        self.trace.add(self.now, txn.coordinator, "BEGIN", txn=str(txn.id), coordinator=txn.coordinator,
                       participants=list(txn.participants), decision_log=decision_log, skip=skip)

    def on_reply(self, node: Node, txn: TxnId, decision: Decision) -> None:
        for cb in self.reply_listeners:
            cb(node, txn, decision)

    def note(self, node: Node, kind: str, **data) -> None:
        self.trace.add(self.now, node.id, kind, **data)

    # --- network ---
    def send(self, msg: Message) -> None:
        enc = msg.encode()
        self.trace.add(self.now, msg.src, "SEND", msg=enc)
        if msg.dst not in self.nodes:
            raise ConfigError(f"message to unknown node {msg.dst}")
        self.schedule(self.now + self.net.delay(msg.src, msg.dst, self.rng), self._deliver, msg, enc)

    def _deliver(self, msg: Message, enc: str) -> None:
        node = self.nodes[msg.dst]
        if node.crashed:
            self.trace.add(self.now, msg.dst, "DROP", msg=enc, reason="crashed")
            return
        self.trace.add(self.now, msg.dst, "DELIVER", msg=enc)

        def handle():
            node._act(f"recv:{msg.kind.value}")
            node.on_message(msg)
        self.invoke(msg.dst, handle)

    # --- timers ---
    def _fire_timer(self, node_id: int, incarnation: int, key, tid: int, timeout: bool) -> None:
        node = self.nodes[node_id]
        if node.crashed or node.incarnation != incarnation or node._timers.get(key) != tid:
            return
        del node._timers[key]

        def handle():
            node._act(f"timer:{key[0] if isinstance(key, tuple) else key}")
            if timeout:
                txn = key[1] if isinstance(key, tuple) and len(key) > 1 else None
                self.trace.add(self.now, node_id, "TIMEOUT", timer=str(key[0] if isinstance(key, tuple) else key),
                               txn=str(txn) if txn is not None else None)
            node.on_timer(key)
        self.invoke(node_id, handle)

    # --- storage ---
    def storage_request(self, node: Node, op: str, log: str, txn: TxnId, rec: Optional[RecordType], tag) -> None:
        if op not in ("log", "log_once", "read"):
            raise ValueError(f"unknown storage op {op!r}")
        req = _StorageRequest(next(self._req_ids), node.id, node.incarnation, op, log, txn, rec, tag, self.now)
        self.trace.add(self.now, node.id, "STORE_REQ", req=req.id, op=op, log=log, txn=str(txn),
                       rec=rec.name if rec is not None else None)
        apply_after, total = self.storage_model.timing(op)
        self.schedule(self.now + apply_after, self._storage_apply, req)
        self.schedule(self.now + total, self._storage_complete, req)

    def _storage_apply(self, req: _StorageRequest) -> None:
        store = self.store
        self._applying = req
        try:
            if req.op == "log_once":
                req.result = store.log_once(req.log, req.txn, req.rec, writer=req.node)
            elif req.op == "log":
                store.log(req.log, req.txn, req.rec, writer=req.node)
                req.result = ACK
            else:
                req.result = store.read_state(req.log, req.txn)
        except StorageUnavailable:
            req.result = UNAVAILABLE
        except IllegalTransition as exc:
            req.result = ILLEGAL
            self.trace.add(self.now, req.node, "STORAGE_ERROR", req=req.id, log=req.log, txn=str(req.txn),
                           rec=req.rec.name, error=str(exc))
        finally:
            self._applying = None

    def _on_slot_write(self, log, txn, field_name, record) -> None:
        req = self._applying
        self.trace.add(self.now, record.writer, "SLOT_WRITE", log=log, txn=str(txn), field=field_name,
                       rec=record.rec.name, req=req.id if req else None, issued=req.issued if req else self.now)

    def _storage_complete(self, req: _StorageRequest) -> None:
        node = self.nodes[req.node]
        result = req.result.name if isinstance(req.result, LogState) else req.result
        if node.crashed or node.incarnation != req.incarnation:
            self.trace.add(self.now, req.node, "DROP", req=req.id, reason="crashed")
            return
        self.trace.add(self.now, req.node, "STORE_RESP", req=req.id, op=req.op, log=req.log, txn=str(req.txn),
                       rec=req.rec.name if req.rec is not None else None, result=result, issued=req.issued)

        def handle():
            node._act(f"stored:{req.op}")
            node.on_storage(req.tag, req.op, req.result)
        self.invoke(req.node, handle)

    def _storage_down(self) -> None:
        self.store.available = False
        self.trace.add(self.now, None, "STORAGE_DOWN")

    def _storage_up(self) -> None:
        self.store.available = True
        self.trace.add(self.now, None, "STORAGE_UP")

    # --- faults ---
    def crash_node(self, node_id: int) -> None:
        node = self.nodes[node_id]
        if node.crashed:
            return
        node.crashed = True
        node.crash_after = None
        node.crash_history = list(node.history)
        node.incarnation += 1
        node._timers.clear()
        self.trace.add(self.now, node_id, "CRASH", after_actions=node.actions)
        node.on_crash()
        spec = next((c for c in self.faults.crashes if c.node == node_id), None)
        if spec is not None and spec.recover_after is not None:
            self.schedule(self.now + spec.recover_after, self.recover_node, node_id)

    def recover_node(self, node_id: int) -> None:
        node = self.nodes[node_id]
        if not node.crashed:
            return
        node.crashed = False
        self.trace.add(self.now, node_id, "RECOVER")
        self.invoke(node_id, node.on_recover)
