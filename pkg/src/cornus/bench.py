"""Closed-loop latency benchmark on the simulator.

Every node runs ``workers`` client loops. Each loop generates a YCSB
transaction coordinated by its node, runs the execution phase and the commit
protocol, and starts the next one when the caller gets its answer. A
transaction aborted by NO-WAIT (or by the protocol) is retried with the same
accesses under a fresh id after a short backoff; everything before the final
attempt counts as abort time, so the four phases add up to the latency.
"""
from __future__ import annotations

import csv
import io
import random
import statistics
from dataclasses import dataclass, field, replace
from typing import Optional

from .core import Transaction, TxnId
from .sim.engine import FaultPlan, NetworkModel, Timeouts
from .sim.run import build
from .storage import FixedLatency, REDIS_CONDITIONAL_WRITE_US, StorageLatencyModel
from .trace import Trace
from .workload import TxnGenerator, WorkloadConfig

CSV_COLUMNS = ("protocol", "nodes", "theta", "txn_class", "count", "mean_us", "p50_us", "p99_us",
               "exec_us", "prepare_us", "commit_us", "abort_us", "abort_rate")
CLASSES = ("single", "distributed", "read_only", "all")


@dataclass(frozen=True)
class BenchConfig:
    protocol: str = "cornus"
    termination: str = "cooperative"
    nodes: int = 4
    theta: float = 0.0
    write_prob: float = 0.5
    txn_size: int = 16
    rows: int = 10_000
    read_only_fraction: float = 0.0
    ro_known: bool = True
    storage: StorageLatencyModel = FixedLatency(REDIS_CONDITIONAL_WRITE_US)
    one_way: int = 250
    jitter: int = 0
    duration_us: int = 1_000_000
    max_txns: Optional[int] = None
    workers: int = 1
    seed: int = 0
    faults: FaultPlan = FaultPlan()
    timeouts: Optional[Timeouts] = None
    retry_backoff_us: Optional[int] = None  # default: one network round trip

    def __post_init__(self):
        if self.protocol not in ("cornus", "2pc"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.termination not in ("naive", "cooperative"):
            raise ValueError(f"unknown termination mode {self.termination!r}")
        if self.nodes < 1 or self.workers < 1:
            raise ValueError("nodes and workers must be positive")
        if self.duration_us <= 0 and not self.max_txns:
            raise ValueError("need a positive duration or a transaction budget")

    def workload(self) -> WorkloadConfig:
        return WorkloadConfig(partitions=self.nodes, rows_per_partition=self.rows,
                              accesses_per_txn=self.txn_size, write_prob=self.write_prob, zipf_theta=self.theta,
                              read_only_fraction=self.read_only_fraction, seed=self.seed)


def txn_class(txn: Transaction) -> str:
    if txn.read_only:
        return "read_only"
    return "distributed" if txn.distributed else "single"


@dataclass
class TxnRecord:
    txn: str
    txn_class: str
    attempts: int
    start: int
    end: int
    exec_us: int
    prepare_us: int
    commit_us: int
    abort_us: int

    @property
    def latency(self) -> int:
        return self.end - self.start


@dataclass
class ClassStats:
    count: int = 0
    mean_us: float = 0.0
    p50_us: float = 0.0
    p99_us: float = 0.0
    exec_us: float = 0.0
    prepare_us: float = 0.0
    commit_us: float = 0.0
    abort_us: float = 0.0
    abort_rate: float = 0.0


def _stats(records: list[TxnRecord]) -> ClassStats:
    if not records:
        return ClassStats()
    lat = [r.latency for r in records]
    p99 = lat[0] if len(lat) == 1 else statistics.quantiles(lat, n=100, method="inclusive")[98]
    attempts = sum(r.attempts for r in records)
    return ClassStats(
        count=len(records),
        mean_us=statistics.fmean(lat),
        p50_us=statistics.median(lat),
        p99_us=p99,
        exec_us=statistics.fmean(r.exec_us for r in records),
        prepare_us=statistics.fmean(r.prepare_us for r in records),
        commit_us=statistics.fmean(r.commit_us for r in records),
        abort_us=statistics.fmean(r.abort_us for r in records),
        abort_rate=(attempts - len(records)) / attempts,
    )


@dataclass
class RunReport:
    config: BenchConfig
    records: list[TxnRecord] = field(default_factory=list)
    trace: Optional[Trace] = None

    def stats(self, cls: str) -> ClassStats:
        if cls == "all":
            return _stats(self.records)
        return _stats([r for r in self.records if r.txn_class == cls])

    def rows(self) -> list[dict]:
        out = []
        for cls in CLASSES:
            s = self.stats(cls)
            out.append({
                "protocol": self.config.protocol,
                "nodes": self.config.nodes,
                "theta": self.config.theta,
                "txn_class": cls,
                "count": s.count,
                **{k: f"{getattr(s, k):.3f}" for k in CSV_COLUMNS[5:12]},
                "abort_rate": f"{s.abort_rate:.6f}",
            })
        return out

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        if header:
            w.writeheader()
        w.writerows(self.rows())
        return buf.getvalue()


class _Client:
    def __init__(self, bench: "_Bench", node: int, index: int):
        self.bench = bench
        self.node = node
        self.rng = random.Random(f"{bench.cfg.seed}:{node}:{index}")
        self.txn: Optional[Transaction] = None

    def next_txn(self) -> None:
        b = self.bench
        if b.sim.now >= b.cfg.duration_us or b.budget_spent():
            return
        b.started += 1
        self.txn = b.gen.generate(self.rng, self.node, b.new_seq(self.node))
        self.first_start = b.sim.now
        self.attempts = 0
        self.attempt(self.txn)

    def attempt(self, txn: Transaction) -> None:
        self.attempts += 1
        self.attempt_start = self.bench.sim.now
        self.bench.sim.nodes[self.node].submit(txn, self.done)

    def done(self, ctx) -> None:
        b = self.bench
        if ctx.outcome != "COMMIT":
            retry = replace(self.txn, id=TxnId(self.node, b.new_seq(self.node)))
            self.txn = retry
            # an immediate retry would meet the same lock holder at the same instant
            b.later(self.node, self.attempt, retry, delay=b.backoff)
            return
        b.report.records.append(TxnRecord(
            txn=str(ctx.txn.id), txn_class=txn_class(ctx.txn), attempts=self.attempts,
            start=self.first_start, end=ctx.t_reply, exec_us=ctx.t_commit_start - ctx.t_start,
            prepare_us=ctx.t_votes - ctx.t_commit_start, commit_us=ctx.t_reply - ctx.t_votes,
            # failed attempts plus the backoff between them
            abort_us=self.attempt_start - self.first_start))
        # a zero-latency txn (local read-only) must not stall virtual time
        b.later(self.node, self.next_txn, delay=0 if b.sim.now > self.first_start else 1)


class _Bench:
    def __init__(self, cfg: BenchConfig, keep_trace: bool):
        self.cfg = cfg
        net = NetworkModel(cfg.one_way, cfg.jitter)
        tail = 20 * ((cfg.timeouts or Timeouts.default(cfg.one_way, cfg.storage)).longest())
        self.sim = build(cfg.protocol, [], nodes=range(cfg.nodes), net=net, storage=cfg.storage,
                         faults=cfg.faults, seed=cfg.seed, timeouts=cfg.timeouts, termination=cfg.termination,
                         ro_known=cfg.ro_known, execution=True, horizon=cfg.duration_us + tail)
        self.gen = TxnGenerator(cfg.workload())
        self.report = RunReport(cfg)
        self.keep_trace = keep_trace
        self.seqs = [0] * cfg.nodes
        self.backoff = cfg.retry_backoff_us if cfg.retry_backoff_us is not None else 2 * cfg.one_way
        self.started = 0

    def new_seq(self, node: int) -> int:
        self.seqs[node] += 1
        return self.seqs[node]

    def budget_spent(self) -> bool:
        return self.cfg.max_txns is not None and self.started >= self.cfg.max_txns

    def later(self, node: int, fn, *args, delay: int = 0) -> None:
        # start from a fresh handler rather than inside the one that finished
        self.sim.schedule(self.sim.now + delay, self.sim.invoke, node, fn, *args)

    def run(self) -> RunReport:
        for node in range(self.cfg.nodes):
            for i in range(self.cfg.workers):
                self.later(node, _Client(self, node, i).next_txn)
        trace = self.sim.run()
        self.report.records.sort(key=lambda r: (r.start, r.txn))
        if self.keep_trace:
            self.report.trace = trace
        return self.report


def bench(cfg: BenchConfig, keep_trace: bool = False) -> RunReport:
    return _Bench(cfg, keep_trace).run()
