import random

from cornus.core import LogState, RecordType
from cornus.linearizability import ACK, Op, is_linearizable, random_schedule, threaded_history

YES, ABORT = RecordType.VOTE_YES, RecordType.ABORT


def test_checker_accepts_sequential_history():
    h = [Op(0, 1, "log_once", YES, LogState.VOTE_YES), Op(2, 3, "log_once", ABORT, LogState.VOTE_YES)]
    assert is_linearizable(h) == [0, 1]


def test_checker_rejects_two_winners():
    # both callers claim their vote landed: impossible for one slot
    h = [Op(0, 5, "log_once", YES, LogState.VOTE_YES, 0), Op(0, 5, "log_once", ABORT, LogState.ABORTED, 1)]
    assert is_linearizable(h) is None


def test_checker_respects_real_time():
    # the abort finished before the yes started, so the yes cannot have won
    h = [Op(0, 1, "log_once", ABORT, LogState.ABORTED), Op(2, 3, "log_once", YES, LogState.VOTE_YES)]
    assert is_linearizable(h) is None


def test_checker_orders_overlapping_ops_freely():
    h = [Op(2, 3, "log_once", ABORT, LogState.VOTE_YES, 1), Op(0, 4, "log_once", YES, LogState.VOTE_YES, 0)]
    assert is_linearizable(h) == [1, 0]


def test_plain_log_in_model():
    h = [Op(0, 1, "log", YES, ACK), Op(2, 3, "log", ABORT, ACK), Op(4, 5, "read", None, LogState.ABORTED)]
    assert is_linearizable(h) is not None


def test_mixed_random_schedules_are_linearizable():
    rng = random.Random(11)
    for _ in range(300):
        r = random_schedule(rng, writers=6, mixed=True)
        assert r.linearization is not None


def test_threaded_races_leave_one_vote():
    for seed in range(30):
        history, votes = threaded_history(writers=8, seed=seed)
        assert votes == 1
        assert is_linearizable(history) is not None
