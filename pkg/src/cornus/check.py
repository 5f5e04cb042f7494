"""Trace checker for the atomic-commit properties.

Works only from the observable trace: slot histories are rebuilt from
SLOT_WRITE events, decisions from DECIDE events, liveness from crash,
recovery and storage-outage events. Nothing here imports protocol code.
"""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

from .core import GlobalDecision, Record, RecordType, TxnLogSlot, global_decision, participant_log
from .messages import Message
from .trace import Trace

PASS, FAIL, BLOCKED = "PASS", "FAIL", "BLOCKED"
PROPERTIES = ("AC1", "AC2", "AC3&4", "AC5", "Lemma1", "write_once", "crash_silence")
SAFETY = ("AC1", "AC2", "AC3&4", "Lemma1", "write_once", "crash_silence")


class CheckError(ValueError):
    """The trace is structurally unusable."""


@dataclass(frozen=True)
class Verdict:
    trace: str
    txn: Optional[str]
    property: str
    status: str
    witness: tuple[int, ...] = ()
    detail: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        d["witness"] = list(self.witness)
        return json.dumps(d, sort_keys=True)


@dataclass
class _Txn:
    name: str
    begin: int
    time: int
    coordinator: int
    participants: tuple[int, ...]
    decision_log: Optional[str]
    skip: bool
    global_now: GlobalDecision = GlobalDecision.UNDETERMINED
    global_at: Optional[int] = None
    read_only: set = field(default_factory=set)


def _need(data: dict, key: str, idx: int, kind: str):
    if key not in data:
        raise CheckError(f"event {idx}: {kind} without {key!r}")
    return data[key]


class _Checker:
    def __init__(self, trace: Trace, name: str):
        self.trace = trace
        self.name = name
        self.header = trace.header
        self.out: list[Verdict] = []
        self.failed: set[tuple[Optional[str], str]] = set()
        self.blocked: set[tuple[Optional[str], str]] = set()

    def fail(self, txn, prop, witness, detail):
        self.out.append(Verdict(self.name, txn, prop, FAIL, tuple(witness), detail))
        self.failed.add((txn, prop))

    def block(self, txn, prop, witness, detail):
        self.out.append(Verdict(self.name, txn, prop, BLOCKED, tuple(witness), detail))
        self.blocked.add((txn, prop))

    # global decision under the trace's ground-truth rule
    def _global(self, t: _Txn, slots) -> GlobalDecision:
        parts = {p: slots.get((participant_log(p), t.name), TxnLogSlot()) for p in t.participants
                 if p not in t.read_only}
        if t.decision_log is None:
            return global_decision(parts)
        coord = slots.get((t.decision_log, t.name), TxnLogSlot())
        if not parts:
            return GlobalDecision.COMMIT  # every participant voted read-only
        aborted = any(r is not None and r.rec is RecordType.ABORT
                      for s in [coord, *parts.values()] for r in (s.vote, s.decision))
        committed = coord.decision is not None and coord.decision.rec is RecordType.COMMIT
        if aborted and committed:
            return None  # contradictory ground truth
        if committed:
            return GlobalDecision.COMMIT
        return GlobalDecision.ABORT if aborted else GlobalDecision.UNDETERMINED

    def run(self) -> list[Verdict]:
        events = self.trace.events
        txns: dict[str, _Txn] = {}
        slots: dict[tuple[str, str], TxnLogSlot] = {}
        decides: list[tuple[int, dict, int]] = []  # (idx, data, node incarnation)
        down: dict[int, int] = {}  # node -> index of its CRASH while down
        incarnation: Counter = Counter()
        crashed_ever: set[int] = set()
        storage_down_at: Optional[int] = None
        disturbances: list[int] = []  # times of crashes, recoveries, outages, repairs
        faulty = False
        last_touch: dict[str, int] = {}
        writes_by_txn: dict[str, list[int]] = defaultdict(list)

        for idx, ev in enumerate(events):
            k, d, node = ev.kind, ev.data, ev.node
            if k == "BEGIN":
                name = _need(d, "txn", idx, k)
                txns[name] = _Txn(name, idx, ev.time, _need(d, "coordinator", idx, k),
                                  tuple(_need(d, "participants", idx, k)), d.get("decision_log"),
                                  bool(d.get("skip")))
                last_touch[name] = ev.time
            elif k == "RO_VOTE":
                name = _need(d, "txn", idx, k)
                if name in txns:
                    txns[name].read_only.add(node)
            elif k == "CRASH":
                if node in down:
                    raise CheckError(f"event {idx}: node {node} crashed twice without recovering")
                down[node] = idx
                incarnation[node] += 1
                crashed_ever.add(node)
                disturbances.append(ev.time)
                faulty = True
            elif k == "RECOVER":
                down.pop(node, None)
                disturbances.append(ev.time)
            elif k == "STORAGE_DOWN":
                storage_down_at = idx
                disturbances.append(ev.time)
                faulty = True
            elif k == "STORAGE_UP":
                storage_down_at = None
                disturbances.append(ev.time)
            elif k == "TIMEOUT":
                faulty = True
            elif k in ("SEND", "STORE_REQ", "DECIDE", "REPLY_TO_CALLER"):
                if node in down:
                    self.fail(d.get("txn") or self._msg_txn(d), "crash_silence", [down[node], idx],
                              f"node {node} acted ({k}) while crashed")
                if k == "DECIDE":
                    name = _need(d, "txn", idx, k)
                    decides.append((idx, d, incarnation[node]))
                    last_touch[name] = ev.time
            elif k == "STORAGE_ERROR":
                self.fail(d.get("txn"), "Lemma1", [idx], f"storage rejected a write: {d.get('error')}")
            elif k == "SLOT_WRITE":
                self._slot_write(idx, ev, slots, txns, writes_by_txn)
                last_touch[d["txn"]] = ev.time

        final = {name: self._global(t, slots) for name, t in txns.items()}
        self._ac1_ac2(txns, final, decides, events)
        self._ac34(txns, final, decides, slots, faulty)
        self._ac5(txns, decides, down, crashed_ever, storage_down_at, disturbances, last_touch, events)

        for name in sorted(txns):
            for prop in PROPERTIES:
                if (name, prop) not in self.failed and (name, prop) not in self.blocked:
                    self.out.append(Verdict(self.name, name, prop, PASS))
        return self.out

    @staticmethod
    def _msg_txn(d):
        try:
            return str(Message.decode(d["msg"]).txn)
        except (KeyError, ValueError):
            return None

    def _slot_write(self, idx, ev, slots, txns, writes_by_txn):
        d = ev.data
        log, name, fld = _need(d, "log", idx, "SLOT_WRITE"), d.get("txn"), d.get("field")
        try:
            rec = RecordType[d["rec"]]
        except KeyError:
            raise CheckError(f"event {idx}: SLOT_WRITE with bad record {d.get('rec')!r}") from None
        if fld not in ("vote", "decision"):
            raise CheckError(f"event {idx}: SLOT_WRITE with bad field {fld!r}")
        slot = slots.setdefault((log, name), TxnLogSlot())
        writes_by_txn[name].append(idx)
        if getattr(slot, fld) is not None:
            self.fail(name, "write_once", [idx], f"second {fld} record in log {log}")
            return
        if fld == "vote" and rec is RecordType.COMMIT or fld == "decision" and rec is RecordType.VOTE_YES:
            raise CheckError(f"event {idx}: {rec.name} cannot be a {fld} record")
        if fld == "decision" and rec is RecordType.COMMIT and slot.vote is not None \
                and slot.vote.rec is RecordType.ABORT:
            self.fail(name, "Lemma1", [idx], f"COMMIT decision over ABORT vote in log {log}")
        setattr(slot, fld, Record(rec, ev.node, ev.time))
        t = txns.get(name)
        if t is None:
            return
        now = self._global(t, slots)
        if now is None:
            self.fail(name, "Lemma1", [*writes_by_txn[name]], "ground truth holds both COMMIT and ABORT")
            now = GlobalDecision.UNDETERMINED
        if t.global_now is not GlobalDecision.UNDETERMINED and now is not t.global_now:
            self.fail(name, "Lemma1", [t.global_at, idx],
                      f"global decision changed {t.global_now.value} -> {now.value}")
        elif t.global_now is GlobalDecision.UNDETERMINED and now is not GlobalDecision.UNDETERMINED:
            t.global_at = idx
        t.global_now = now

    def _ac1_ac2(self, txns, final, decides, events):
        seen: dict[tuple, tuple[int, str, int]] = {}
        for idx, d, inc in decides:
            name, value, role = d["txn"], _need(d, "decision", idx, "DECIDE"), d.get("role")
            node = events[idx].node
            t = txns.get(name)
            if t is None:
                if value != "ABORT":
                    self.fail(name, "AC1", [idx], f"node {node} committed a transaction that never began")
            elif t.skip:
                if value != "COMMIT":
                    self.fail(name, "AC1", [t.begin, idx], "read-only transaction decided ABORT")
            else:
                g = final[name]
                if g is None or g.value != value:
                    got = "contradictory" if g is None else g.value
                    self.fail(name, "AC1", [idx], f"node {node} ({role}) decided {value}, global decision {got}")
            key = (node, name, role)
            prev = seen.get(key)
            if prev is not None:
                pidx, pval, pinc = prev
                if pval != value:
                    self.fail(name, "AC2", [pidx, idx], f"node {node} ({role}) changed decision {pval} -> {value}")
                elif pinc == inc:
                    self.fail(name, "AC2", [pidx, idx], f"node {node} ({role}) decided twice")
            seen[key] = (idx, value, inc)

    def _ac34(self, txns, final, decides, slots, faulty):
        by_txn = defaultdict(list)
        for idx, d, _ in decides:
            by_txn[d["txn"]].append((idx, d["decision"]))
        for name, t in txns.items():
            if t.skip:
                continue
            voters = [p for p in t.participants if p not in t.read_only]
            votes = {p: slots.get((participant_log(p), name), TxnLogSlot()).vote for p in voters}
            all_yes = all(v is not None and v.rec is RecordType.VOTE_YES for v in votes.values())
            commits = [i for i, v in by_txn[name] if v == "COMMIT"]
            aborts = [i for i, v in by_txn[name] if v == "ABORT"]
            if commits and not all_yes:
                bad = sorted(p for p, v in votes.items() if v is None or v.rec is not RecordType.VOTE_YES)
                self.fail(name, "AC3&4", [commits[0]], f"COMMIT without a yes vote from {bad}")
            if all_yes and t.decision_log is None and aborts:
                self.fail(name, "AC3&4", [aborts[0]], "ABORT although every participant logged VOTE_YES")
            if all_yes and not faulty and (aborts or not commits):
                self.fail(name, "AC3&4", aborts[:1] or [t.begin], "failure-free all-yes run did not commit")

    def _ac5(self, txns, decides, down, crashed_ever, storage_down_at, disturbances, last_touch, events):
        decided: dict[tuple[int, str, str], int] = {}
        for idx, d, _ in decides:
            decided.setdefault((events[idx].node, d["txn"], d.get("role")), idx)
        cycle = self.header.get("ac5_cycle")
        k = self.header.get("ac5_cycles", 3)
        for name, t in txns.items():
            if t.skip:
                continue
            duties = [(p, "participant") for p in t.participants if p not in t.read_only]
            if t.coordinator not in crashed_ever:
                duties.append((t.coordinator, "coordinator"))
            for node, role in duties:
                idx = decided.get((node, name, role))
                if idx is None:
                    if node in down:
                        continue  # down at the end of the run: no obligation
                    where = f"node {node} ({role}) never decided"
                    progress = f"last progress at t={last_touch.get(name, t.time)}"
                    if storage_down_at is not None:
                        self.block(name, "AC5", [storage_down_at], f"{where}: storage down; {progress}")
                    elif t.decision_log is not None and t.coordinator in down:
                        self.block(name, "AC5", [down[t.coordinator]], f"{where}: coordinator down; {progress}")
                    else:
                        self.fail(name, "AC5", [t.begin], where)
                    continue
                if cycle:
                    at = events[idx].time
                    ref = max([t.time, *(x for x in disturbances if x <= at)])
                    if at > ref + k * cycle:
                        self.fail(name, "AC5", [idx], f"node {node} ({role}) decided at t={at}, "
                                                      f"beyond {k} retry cycles after t={ref}")


def check(trace: Trace, name: Optional[str] = None) -> list[Verdict]:
    """One verdict per property per transaction (plus FAIL records for
    problems attributable to no transaction)."""
    return _Checker(trace, name or trace.digest()).run()


@dataclass
class Summary:
    traces: int = 0
    by_protocol: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    blocked: list = field(default_factory=list)
    unexpected_blocked: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and not self.unexpected_blocked

    def lines(self) -> list[str]:
        out = [f"traces={self.traces} fail={len(self.failures)} blocked={len(self.blocked)} "
               f"unexpected_blocked={len(self.unexpected_blocked)} -> {'PASS' if self.ok else 'FAIL'}"]
        for proto, c in sorted(self.by_protocol.items()):
            out.append(f"  {proto}: traces={c['traces']} fail={c['fail']} blocked={c['blocked']}")
        return out


def check_all(traces: Iterable[Trace]) -> Summary:
    """Aggregate verdicts. Any FAIL fails the run. BLOCKED is tolerated for
    2PC (coordinator down) and for traces where storage is down at the end;
    a Cornus trace with storage alive must never block."""
    s = Summary()
    for trace in traces:
        s.traces += 1
        proto = trace.header.get("protocol", "?")
        if trace.header.get("termination"):
            proto += f"/{trace.header['termination']}"
        c = s.by_protocol.setdefault(proto, {"traces": 0, "fail": 0, "blocked": 0})
        c["traces"] += 1
        storage_down = False
        for ev in trace.events:
            if ev.kind == "STORAGE_DOWN":
                storage_down = True
            elif ev.kind == "STORAGE_UP":
                storage_down = False
        verdicts = check(trace)
        fails = [v for v in verdicts if v.status == FAIL]
        blocks = [v for v in verdicts if v.status == BLOCKED]
        s.failures += fails
        s.blocked += blocks
        c["fail"] += bool(fails)
        c["blocked"] += bool(blocks)
        if blocks and trace.header.get("ground_truth") == "participant_slots" and not storage_down:
            s.unexpected_blocked += blocks
    return s


def critical_path_writes(trace: Trace, txn: str) -> int:
    """Longest chain of storage writes for ``txn`` that ran one after another
    between the start of its commit protocol and the caller's reply; writes
    that overlap in time count once."""
    begin = next((e.time for e in trace.events if e.kind == "BEGIN" and e.data.get("txn") == txn), None)
    reply = next((e.time for e in trace.events if e.kind == "REPLY_TO_CALLER" and e.data.get("txn") == txn), None)
    if begin is None or reply is None:
        raise CheckError(f"{txn} has no BEGIN/REPLY_TO_CALLER in the trace")
    issued = {e.data["req"]: e.time for e in trace.events
              if e.kind == "STORE_REQ" and e.data.get("txn") == txn and e.data.get("op") != "read"}
    spans = sorted((e.time, issued[e.data["req"]]) for e in trace.events
                   if e.kind == "STORE_RESP" and e.data.get("req") in issued)
    spans = [(start, end) for end, start in spans if begin <= start and end <= reply]
    # interval chain DP over spans sorted by end time
    best: list[tuple[int, int]] = []  # (end, chain length ending here)
    longest = 0
    for start, end in spans:
        prev = max((n for e, n in best if e <= start), default=0)
        best.append((end, prev + 1))
        longest = max(longest, prev + 1)
    return longest
