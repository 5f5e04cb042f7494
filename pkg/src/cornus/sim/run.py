"""Wire protocol nodes into a Simulator and run a batch of transactions."""
from __future__ import annotations

from typing import Iterable, Optional, Sequence

from ..core import Transaction, TxnId
from ..storage import FixedLatency, PaxosLeaderLatency, REDIS_CONDITIONAL_WRITE_US, StorageLatencyModel
from ..trace import Trace
from .engine import ConfigError, FaultPlan, NetworkModel, Simulator, Timeouts, storage_write_latency

GROUND_TRUTH = {"cornus": "participant_slots", "2pc": "coordinator_log"}
AC5_CYCLES = 3


def describe_storage(model: StorageLatencyModel) -> str:
    if isinstance(model, PaxosLeaderLatency):
        return f"paxos:{model.one_way}:{model.acceptors}"
    if model.read is None:
        return f"fixed:{model.write}"
    return f"fixed:{model.write}:{model.read}"


def retry_cycle(timeouts: Timeouts, net: NetworkModel, storage: StorageLatencyModel) -> int:
    """Upper bound on one timeout-and-retry round of any protocol step."""
    return timeouts.longest() + storage_write_latency(storage) + 2 * net.max_delay()


def build(protocol: str, txns: Sequence[Transaction], *, net: NetworkModel = NetworkModel(),
          storage: StorageLatencyModel = FixedLatency(REDIS_CONDITIONAL_WRITE_US),
          faults: FaultPlan = FaultPlan(), seed: int = 0, timeouts: Optional[Timeouts] = None,
          termination: str = "cooperative", ro_known: bool = True, execution: bool = False,
          vote_no: Iterable[tuple[int, TxnId]] = (), inject_bug: Optional[str] = None, horizon: Optional[int] = None,
          nodes: Iterable[int] = ()) -> Simulator:
    from ..protocols import PROTOCOLS, CornusNode, TwoPCNode

    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}")
    if inject_bug is not None and protocol != "cornus":
        raise ConfigError("bug injection applies to cornus only")
    if len({t.id for t in txns}) != len(txns):
        raise ConfigError("duplicate transaction id")
    timeouts = timeouts or Timeouts.default(net.one_way, storage)
    ids = set(nodes)
    for t in txns:
        ids.add(t.coordinator)
        ids.update(t.participants)
    if horizon is None:
        extra = max([c.recover_after or 0 for c in faults.crashes]
                    + [c.at_time or 0 for c in faults.crashes]
                    + [o.end or o.start for o in faults.outages] + [0])
        horizon = extra + 20 * retry_cycle(timeouts, net, storage)
    header = {
        "protocol": protocol,
        "termination": termination if protocol == "2pc" else None,
        "ground_truth": GROUND_TRUTH[protocol],
        "storage": describe_storage(storage),
        "one_way": net.one_way,
        "timeouts": [timeouts.vote_wait, timeouts.decision_wait, timeouts.termination_wait,
                     timeouts.storage_retry],
        "ac5_cycle": retry_cycle(timeouts, net, storage),
        "ac5_cycles": AC5_CYCLES,
        "ro_known": ro_known,
        "seed": seed,
        "bug": inject_bug,
    }
    sim = Simulator(net=net, storage=storage, timeouts=timeouts, faults=faults, seed=seed, horizon=horizon,
                    header=header)
    no_votes: dict[int, set] = {}
    for node, txn_id in vote_no:
        no_votes.setdefault(node, set()).add(txn_id)
    for i in sorted(ids):
        if protocol == "cornus":
            node = CornusNode(i, timeouts, execution=execution, ro_known=ro_known,
                              vote_no=frozenset(no_votes.get(i, ())), inject_bug=inject_bug)
        else:
            node = TwoPCNode(i, timeouts, execution=execution, ro_known=ro_known,
                             vote_no=frozenset(no_votes.get(i, ())), termination=termination)
        sim.add_node(node)
    for t in txns:
        if not execution:
            # execution already done: every participant holds its locks
            for p in t.participants:
                sim.nodes[p].join(t)
        coord = sim.nodes[t.coordinator]
        sim.schedule(0, sim.invoke, t.coordinator, coord.submit, t)
    return sim


def run(protocol: str, txns: Sequence[Transaction], **kw) -> Trace:
    """Simulate ``txns`` (all submitted at time 0) and return the trace.
    Identical arguments give byte-identical traces."""
    return build(protocol, txns, **kw).run()
