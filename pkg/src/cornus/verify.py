"""Exploration suite: explore every crash point for Cornus and both 2PC
variants, check each trace, and report per-row trace counts."""
from __future__ import annotations

import sys
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, TextIO

from .check import BLOCKED, FAIL, check, check_all
from .sim.explore import COORDINATOR_ROWS, PARTICIPANT_ROWS, explore, storage_down_run
from .storage import FixedLatency, REDIS_CONDITIONAL_WRITE_US, StorageLatencyModel

VARIANTS = (("cornus", "cooperative"), ("2pc", "naive"), ("2pc", "cooperative"))
BLOCKING_ROW = "C3"  # coordinator down after all vote requests, before any decision


@dataclass
class RowStats:
    traces: Counter = field(default_factory=Counter)
    failed: Counter = field(default_factory=Counter)
    blocked: Counter = field(default_factory=Counter)


@dataclass
class SuiteResult:
    rows: dict = field(default_factory=dict)  # variant name -> RowStats
    failures: list = field(default_factory=list)
    problems: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and not self.problems


def _variant_name(protocol: str, termination: str) -> str:
    return protocol if protocol == "cornus" else f"{protocol}/{termination}"


def run_suite(nodes: int = 3, *, inject_bug: Optional[str] = None, one_way: int = 250,
              storage: StorageLatencyModel = FixedLatency(REDIS_CONDITIONAL_WRITE_US)) -> SuiteResult:
    res = SuiteResult()
    variants = [("cornus", "cooperative")] if inject_bug else VARIANTS
    for protocol, termination in variants:
        name = _variant_name(protocol, termination)
        ex = explore(protocol, nodes=nodes, termination=termination, one_way=one_way, storage=storage,
                     inject_bug=inject_bug)
        stats = res.rows[name] = RowStats()
        for label, trace in ex.traces:
            verdicts = check(trace, f"{name}:{label}")
            stats.traces[label] += 1
            fails = [v for v in verdicts if v.status == FAIL]
            if fails:
                stats.failed[label] += 1
                res.failures += fails
            if any(v.status == BLOCKED for v in verdicts):
                stats.blocked[label] += 1
        summary = check_all(trace for _, trace in ex.traces)
        if summary.unexpected_blocked:
            res.problems.append(f"{name}: {len(summary.unexpected_blocked)} blocked verdicts with storage alive")
        if inject_bug:
            continue
        if protocol == "2pc" and not stats.blocked[BLOCKING_ROW]:
            res.problems.append(f"{name}: no blocked trace at {BLOCKING_ROW}")
        if protocol == "cornus" and not stats.traces[BLOCKING_ROW]:
            res.problems.append(f"{name}: no trace at {BLOCKING_ROW}")
    return res


def print_suite(res: SuiteResult, out: Optional[TextIO] = None) -> None:
    out = out or sys.stdout
    labels = ["fault-free", *COORDINATOR_ROWS, *PARTICIPANT_ROWS, "none"]
    for name, stats in res.rows.items():
        print(f"{name}: {sum(stats.traces.values())} traces", file=out)
        for label in labels:
            if stats.traces[label]:
                desc = COORDINATOR_ROWS.get(label) or PARTICIPANT_ROWS.get(label) or ""
                print(f"  {label:<10} traces={stats.traces[label]:<4} fail={stats.failed[label]:<3} "
                      f"blocked={stats.blocked[label]:<3} {desc}", file=out)
    for v in res.failures[:20]:
        print(f"FAIL {v.trace} {v.txn} {v.property} witness={list(v.witness)} {v.detail}", file=out)
    if len(res.failures) > 20:
        print(f"... {len(res.failures) - 20} more failures", file=out)
    for p in res.problems:
        print(f"PROBLEM {p}", file=out)
    print("verify: " + ("PASS" if res.ok else "FAIL"), file=out)


def storage_down(nodes: int = 3, out: Optional[TextIO] = None) -> bool:
    """Run the storage-outage scenario; True iff Cornus is reported BLOCKED
    for that reason and nothing fails."""
    out = out or sys.stdout
    trace = storage_down_run("cornus", nodes=nodes)
    verdicts = check(trace, "cornus:storage-down")
    blocked = [v for v in verdicts if v.status == BLOCKED]
    fails = [v for v in verdicts if v.status == FAIL]
    for v in blocked + fails:
        print(f"{v.status} {v.trace} {v.txn} {v.property}: {v.detail}", file=out)
    ok = bool(blocked) and not fails and all("storage" in v.detail for v in blocked)
    print("storage-down: " + ("BLOCKED as expected" if ok else "unexpected result"), file=out)
    return ok
