"""YCSB-style transaction generation and the NO-WAIT lock table used by each
partition's resource manager."""
from __future__ import annotations

import bisect
import enum
import itertools
import random
from dataclasses import dataclass
from typing import Optional

from .core import READ, WRITE, Transaction, TxnId


@dataclass(frozen=True)
class WorkloadConfig:
    partitions: int = 4
    rows_per_partition: int = 10_000
    accesses_per_txn: int = 16
    write_prob: float = 0.5
    zipf_theta: float = 0.0
    read_only_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("write_prob", "read_only_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {v}")
        if self.zipf_theta < 0:
            raise ValueError("zipf_theta must be >= 0")
        if self.partitions < 1 or self.rows_per_partition < 1 or self.accesses_per_txn < 1:
            raise ValueError("partitions, rows_per_partition and accesses_per_txn must be positive")
        if self.accesses_per_txn > self.partitions * self.rows_per_partition:
            raise ValueError("more accesses per transaction than rows")


def zipf_weights(n: int, theta: float) -> list[float]:
    return [1.0 / (rank ** theta) for rank in range(1, n + 1)]


class ZipfianSampler:
    """Exact inverse-CDF sampling over ranks 0..n-1 with P(rank i) ∝ 1/(i+1)^theta."""

    def __init__(self, n: int, theta: float):
        self.n = n
        self.theta = theta
        self._cum = list(itertools.accumulate(zipf_weights(n, theta)))

    def sample(self, rng: random.Random) -> int:
        u = rng.random() * self._cum[-1]
        return min(bisect.bisect_right(self._cum, u), self.n - 1)


class TxnGenerator:
    def __init__(self, cfg: WorkloadConfig):
        self.cfg = cfg
        self.sampler = ZipfianSampler(cfg.rows_per_partition, cfg.zipf_theta)

    def generate(self, rng: random.Random, coordinator: int = 0, seq: int = 0) -> Transaction:
        cfg = self.cfg
        force_read_only = rng.random() < cfg.read_only_fraction
        seen: set[tuple[int, int]] = set()
        accesses: dict[int, list[tuple[int, str]]] = {}
        while len(seen) < cfg.accesses_per_txn:
            part = rng.randrange(cfg.partitions)
            row = self.sampler.sample(rng)
            if (part, row) in seen:
                continue
            seen.add((part, row))
            write = not force_read_only and rng.random() < cfg.write_prob
            accesses.setdefault(part, []).append((row, WRITE if write else READ))
        return Transaction(
            id=TxnId(coordinator, seq),
            coordinator=coordinator,
            participants=tuple(sorted(accesses)),
            accesses={p: tuple(a) for p, a in sorted(accesses.items())},
        )


def generate_txn(cfg: WorkloadConfig, rng: random.Random, coordinator: int = 0, seq: int = 0) -> Transaction:
    return TxnGenerator(cfg).generate(rng, coordinator, seq)


class LockMode(enum.Enum):
    SHARED = "S"
    EXCLUSIVE = "X"


class LockResult(enum.Enum):
    GRANTED = "GRANTED"
    NOWAIT_ABORT = "NOWAIT_ABORT"


@dataclass
class _Lock:
    mode: LockMode
    holders: set


class LockTable:
    """Shared/exclusive locks with NO-WAIT conflict handling: an incompatible
    request fails immediately instead of queueing."""

    def __init__(self):
        self._locks: dict[object, _Lock] = {}

    def acquire(self, key, mode: LockMode, txn) -> LockResult:
        lock = self._locks.get(key)
        if lock is None:
            self._locks[key] = _Lock(mode, {txn})
            return LockResult.GRANTED
        if lock.holders == {txn}:
            if mode is LockMode.EXCLUSIVE:
                lock.mode = LockMode.EXCLUSIVE
            return LockResult.GRANTED
        if lock.mode is LockMode.SHARED and mode is LockMode.SHARED:
            lock.holders.add(txn)
            return LockResult.GRANTED
        return LockResult.NOWAIT_ABORT

    def release(self, key, txn) -> None:
        lock = self._locks.get(key)
        if lock is None or txn not in lock.holders:
            return
        lock.holders.discard(txn)
        if not lock.holders:
            del self._locks[key]

    def state(self, key) -> tuple[str, frozenset]:
        lock = self._locks.get(key)
        if lock is None:
            return "FREE", frozenset()
        return ("EXCLUSIVE" if lock.mode is LockMode.EXCLUSIVE else "SHARED"), frozenset(lock.holders)

    def held_by(self, txn) -> list:
        return [k for k, lock in self._locks.items() if txn in lock.holders]

    def __len__(self) -> int:
        return len(self._locks)


def acquire_all(table: LockTable, accesses, txn) -> Optional[list]:
    """Lock every (key, mode) access; on the first conflict release what was
    taken and return None."""
    taken = []
    for key, mode in accesses:
        want = LockMode.EXCLUSIVE if mode == WRITE else LockMode.SHARED
        if table.acquire(key, want, txn) is LockResult.NOWAIT_ABORT:
            for k in taken:
                table.release(k, txn)
            return None
        taken.append(key)
    return taken


READY = "READY"
ABORTED_EARLY = "ABORTED_EARLY"


def run_execution_phase(txn: Transaction, nodes: Optional[list] = None, *, one_way: int = 250,
                        held: tuple = (), crash: tuple = ()) -> tuple[str, int]:
    """Run only the execution phase of ``txn`` in a fresh simulation and
    return (READY | ABORTED_EARLY, virtual time it finished).

    ``held`` pre-locks ``(node, key, mode, owner)`` entries; ``crash`` lists
    nodes that are down from the start."""
    from .protocols.base import ProtocolNode
    from .sim.engine import CrashSpec, FaultPlan, NetworkModel, Simulator, Timeouts
    from .storage import REDIS_CONDITIONAL_WRITE_US, FixedLatency

    outcome: list[tuple[str, int]] = []

    class _ExecOnly(ProtocolNode):
        def coordinator_start(self, ctx):
            outcome.append((READY, self.now))

        def on_timer(self, key):
            self.on_exec_timer(key)

        def on_storage(self, tag, op, result):
            pass

    storage = FixedLatency(REDIS_CONDITIONAL_WRITE_US)
    timeouts = Timeouts.default(one_way, storage)
    faults = FaultPlan(tuple(CrashSpec(n, at_time=0) for n in crash))
    sim = Simulator(net=NetworkModel(one_way), storage=storage, timeouts=timeouts, faults=faults)
    for i in sorted(set(nodes or ()) | {txn.coordinator, *txn.participants}):
        sim.add_node(_ExecOnly(i, timeouts, execution=True))
    for node, key, mode, owner in held:
        sim.nodes[node].locks.acquire(key, LockMode.EXCLUSIVE if mode == WRITE else LockMode.SHARED, owner)

    def done(ctx):
        if ctx.outcome == ABORTED_EARLY:
            outcome.append((ABORTED_EARLY, sim.now))

    sim.schedule(0, sim.invoke, txn.coordinator, sim.nodes[txn.coordinator].submit, txn, done)
    sim.horizon = 4 * timeouts.longest()
    sim.run()
    if not outcome:
        return ABORTED_EARLY, sim.now
    return outcome[0]

