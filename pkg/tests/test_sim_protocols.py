import pytest

from cornus.check import BLOCKED, FAIL, PASS, check
from cornus.core import WRITE, Transaction, TxnId
from cornus.sim import build, run
from cornus.sim.engine import ConfigError, CrashSpec, FaultPlan, NetworkModel, StorageOutage
from cornus.storage import FixedLatency, PaxosLeaderLatency

D, W = 250, 1960


def txn(parts=(1, 2), coordinator=0, seq=1):
    return Transaction(TxnId(coordinator, seq), coordinator, tuple(parts), {p: ((p, WRITE),) for p in parts})


def reply(trace, name="t0.1"):
    evs = [e for e in trace.events if e.kind == "REPLY_TO_CALLER" and e.data["txn"] == name]
    assert len(evs) == 1
    return evs[0].time, evs[0].data["decision"]


def decisions(trace, name="t0.1"):
    return {(e.node, e.data["role"]): e.data["decision"] for e in trace.events
            if e.kind == "DECIDE" and e.data["txn"] == name}


def statuses(trace):
    return {v.status for v in check(trace)}


@pytest.mark.parametrize("protocol,want", [("cornus", 2 * D + W), ("2pc", 2 * D + 2 * W)])
def test_fault_free_commit_latency_fixed(protocol, want):
    trace = run(protocol, [txn()], net=NetworkModel(D), storage=FixedLatency(W))
    assert reply(trace) == (want, "COMMIT")
    assert statuses(trace) == {PASS}


@pytest.mark.parametrize("protocol,rtts", [("cornus", 3), ("2pc", 5)])
def test_fault_free_commit_latency_paxos(protocol, rtts):
    trace = run(protocol, [txn()], net=NetworkModel(D), storage=PaxosLeaderLatency(D))
    assert reply(trace) == (2 * D * rtts, "COMMIT")


@pytest.mark.parametrize("protocol", ["cornus", "2pc"])
def test_one_no_vote_aborts_everywhere(protocol):
    trace = run(protocol, [txn()], vote_no=[(2, TxnId(0, 1))])
    assert reply(trace)[1] == "ABORT"
    assert set(decisions(trace).values()) == {"ABORT"}
    assert statuses(trace) == {PASS}


def test_runs_are_byte_identical():
    kw = dict(net=NetworkModel(D, jitter=40), seed=5, faults=FaultPlan.parse("1:at=300:recover=40000"))
    a, b = run("cornus", [txn()], **kw), run("cornus", [txn()], **kw)
    assert a.dumps() == b.dumps()
    c = run("cornus", [txn()], **{**kw, "seed": 6})
    assert c.dumps() != a.dumps()


def test_coordinator_crash_after_vote_requests():
    # coordinator dies once the vote requests are out and never returns
    faults = FaultPlan((CrashSpec(0, at_time=D + 1),))
    cornus = run("cornus", [txn()], faults=faults)
    assert decisions(cornus) == {(1, "participant"): "COMMIT", (2, "participant"): "COMMIT"}
    assert statuses(cornus) == {PASS}
    for mode in ("naive", "cooperative"):
        twopc = run("2pc", [txn()], faults=faults, termination=mode)
        verdicts = check(twopc)
        blocked = [v for v in verdicts if v.status == BLOCKED]
        assert blocked and all("coordinator down" in v.detail for v in blocked)
        assert not [v for v in verdicts if v.status == FAIL]


def test_2pc_participants_decide_after_coordinator_recovers():
    faults = FaultPlan((CrashSpec(0, at_time=D + 1, recover_after=50_000),))
    trace = run("2pc", [txn()], faults=faults, termination="naive")
    assert set(decisions(trace)) >= {(1, "participant"), (2, "participant")}
    assert statuses(trace) == {PASS}


def test_cornus_silent_participant_is_aborted_by_terminator():
    faults = FaultPlan((CrashSpec(2, at_time=0),))
    trace = run("cornus", [txn()], faults=faults)
    assert reply(trace)[1] == "ABORT"
    writes = [(e.data["log"], e.data["rec"], e.node) for e in trace.events if e.kind == "SLOT_WRITE"]
    # someone other than node 2 put ABORT into node 2's log
    assert any(log == "2" and rec == "ABORT" and node != 2 for log, rec, node in writes)
    assert statuses(trace) == {PASS}


def test_cornus_recovers_through_temporary_storage_outage():
    faults = FaultPlan(outages=(StorageOutage(D + 1, 30_000),))
    trace = run("cornus", [txn()], faults=faults)
    assert reply(trace)[1] in ("COMMIT", "ABORT")
    assert statuses(trace) == {PASS}


def test_permanent_storage_outage_blocks_cornus():
    trace = run("cornus", [txn()], faults=FaultPlan(outages=(StorageOutage(D + 1),)))
    blocked = [v for v in check(trace) if v.status == BLOCKED]
    assert blocked and all("storage down" in v.detail for v in blocked)


def test_coordinator_as_participant():
    t = Transaction(TxnId(0, 1), 0, (0, 1), {0: ((1, WRITE),), 1: ((2, WRITE),)})
    trace = run("cornus", [t])
    assert reply(trace) == (2 * D + W, "COMMIT")
    assert statuses(trace) == {PASS}


def test_many_transactions_in_one_run():
    txns = [txn(seq=i) for i in range(1, 6)]
    trace = run("2pc", txns)
    assert [reply(trace, f"t0.{i}")[1] for i in range(1, 6)] == ["COMMIT"] * 5


def test_build_validation():
    with pytest.raises(ConfigError):
        build("3pc", [txn()])
    with pytest.raises(ConfigError):
        build("cornus", [txn(), txn()])
    with pytest.raises(ConfigError):
        build("2pc", [txn()], inject_bug="skip-logonce")


def test_fault_plan_parse():
    plan = FaultPlan.parse("1:after=3:recover=100, 2:at=50, storage:down=10:up=20")
    assert plan.crashes == (CrashSpec(1, after_actions=3, recover_after=100), CrashSpec(2, at_time=50))
    assert plan.outages == (StorageOutage(10, 20),)
    for bad in ("x:at=1", "1:at", "storage:up=3"):
        with pytest.raises(ConfigError):
            FaultPlan.parse(bad)
