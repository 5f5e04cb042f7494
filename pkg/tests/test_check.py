import json

import pytest

from cornus.check import BLOCKED, FAIL, PASS, PROPERTIES, CheckError, check, check_all, critical_path_writes
from cornus.core import READ, WRITE, Transaction, TxnId
from cornus.sim import run
from cornus.sim.engine import CrashSpec, FaultPlan
from cornus.trace import Trace

T = Transaction(TxnId(0, 1), 0, (1, 2), {1: ((1, WRITE),), 2: ((2, WRITE),)})


def copy(trace):
    return Trace.loads(trace.dumps())


def fails(trace, prop=None):
    return [v for v in check(trace) if v.status == FAIL and (prop is None or v.property == prop)]


def test_fault_free_trace_passes_every_property():
    verdicts = check(run("cornus", [T]))
    assert {(v.property, v.status) for v in verdicts} == {(p, PASS) for p in PROPERTIES}


def test_two_different_decides_fail_ac1_with_witness():
    trace = copy(run("cornus", [T]))
    last = trace.events[-1].time
    trace.add(last, 2, "DECIDE", txn="t0.1", decision="ABORT", role="participant")
    bad = fails(trace, "AC1")
    assert bad and bad[0].witness == (len(trace.events) - 1,)
    assert fails(trace, "AC2")  # the same node changed its mind


def test_duplicate_decide_fails_ac2():
    trace = copy(run("cornus", [T]))
    dup = next(e for e in trace.events if e.kind == "DECIDE")
    trace.add(dup.time, dup.node, "DECIDE", **dup.data)
    assert fails(trace, "AC2")


def test_commit_after_abort_record_fails_lemma1():
    trace = run("cornus", [T], vote_no=[(2, TxnId(0, 1))])
    trace = copy(trace)
    # node 2 voted no; a COMMIT decision in its log contradicts that vote
    trace.add(trace.events[-1].time, 2, "SLOT_WRITE", log="2", txn="t0.1", field="decision", rec="COMMIT",
              writer=2)
    assert fails(trace, "Lemma1")
    assert not fails(trace, "write_once")


def test_second_vote_record_fails_write_once():
    trace = copy(run("cornus", [T]))
    trace.add(trace.events[-1].time, 1, "SLOT_WRITE", log="1", txn="t0.1", field="vote", rec="ABORT", writer=0)
    assert fails(trace, "write_once")


def test_action_while_crashed_fails_crash_silence():
    trace = copy(run("cornus", [T]))
    t = trace.events[-1].time
    trace.add(t, 1, "CRASH", after_actions=0)
    trace.add(t, 1, "STORE_REQ", req=999, op="read", log="1", txn="t0.1", rec=None)
    assert fails(trace, "crash_silence")


def test_missing_decision_is_fail_when_nothing_excuses_it():
    trace = copy(run("cornus", [T]))
    trace.events = [e for e in trace.events if not (e.kind == "DECIDE" and e.node == 2)]
    bad = fails(trace, "AC5")
    assert bad and "node 2" in bad[0].detail


def test_blocked_2pc_trace_is_tolerated_by_check_all():
    trace = run("2pc", [T], faults=FaultPlan((CrashSpec(0, at_time=251),)))
    assert any(v.status == BLOCKED for v in check(trace))
    assert check_all([trace]).ok


def test_blocked_cornus_trace_with_storage_alive_is_not_ok():
    trace = copy(run("cornus", [T], faults=FaultPlan((CrashSpec(0, at_time=251),))))
    # drop the participants' decisions and pretend the coordinator is still down
    trace.events = [e for e in trace.events if e.kind != "DECIDE"]
    s = check_all([trace])
    assert not s.ok


def test_empty_trace_set_is_vacuous_pass():
    s = check_all([])
    assert s.ok and s.traces == 0


@pytest.mark.parametrize("line", [
    '0\t0\tBEGIN\t{"coordinator":0}',
    '0\t1\tSLOT_WRITE\t{"log":"1","txn":"t0.1","field":"vote","rec":"MAYBE"}',
    '0\t1\tSLOT_WRITE\t{"log":"1","txn":"t0.1","field":"vote","rec":"COMMIT"}',
])
def test_malformed_trace_raises(line):
    with pytest.raises(CheckError):
        check(Trace.loads(line))


def test_verdicts_are_deterministic_and_serializable():
    trace = run("2pc", [T], faults=FaultPlan((CrashSpec(0, at_time=251),)))
    a, b = check(trace), check(copy(trace))
    assert [v.to_json() for v in a] == [v.to_json() for v in b]
    row = json.loads(a[0].to_json())
    assert set(row) == {"trace", "txn", "property", "status", "witness", "detail"}


def test_critical_path_counts_sequential_writes_only():
    assert critical_path_writes(run("cornus", [T]), "t0.1") == 1
    assert critical_path_writes(run("2pc", [T]), "t0.1") == 2
    mixed = Transaction(TxnId(0, 1), 0, (1, 2), {1: ((1, WRITE),), 2: ((2, READ),)})
    assert critical_path_writes(run("cornus", [mixed], ro_known=False), "t0.1") == 1
    with pytest.raises(CheckError):
        critical_path_writes(run("cornus", [T]), "t9.9")
