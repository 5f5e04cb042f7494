import random
from collections import Counter

import pytest
from scipy import stats

from cornus.core import READ, WRITE, Transaction, TxnId
from cornus.workload import (
    ABORTED_EARLY, READY, LockMode, LockResult, LockTable, TxnGenerator, WorkloadConfig, ZipfianSampler,
    acquire_all, generate_txn, run_execution_phase,
)


def test_uniform_keys_pass_chi_square():
    sampler, rng = ZipfianSampler(100, 0.0), random.Random(1)
    counts = Counter(sampler.sample(rng) for _ in range(100_000))
    assert set(counts) <= set(range(100))
    _, p = stats.chisquare([counts[k] for k in range(100)])
    assert p > 0.01


def test_skewed_rank_one_frequency_matches_harmonic_oracle():
    n, theta, draws = 100, 0.99, 100_000
    h = sum(1 / k ** theta for k in range(1, n + 1))
    sampler, rng = ZipfianSampler(n, theta), random.Random(2)
    top = sum(sampler.sample(rng) == 0 for _ in range(draws)) / draws
    assert abs(top - 1 / h) <= 0.05 * (1 / h)


@pytest.mark.parametrize("size,write_prob", [(4, 0.5), (16, 0.2)])
def test_read_only_fraction_is_read_prob_to_the_size(size, write_prob):
    cfg = WorkloadConfig(partitions=4, rows_per_partition=1000, accesses_per_txn=size, write_prob=write_prob)
    gen, rng = TxnGenerator(cfg), random.Random(3)
    n = 20_000
    ro = sum(gen.generate(rng).read_only for _ in range(n))
    expected = (1 - write_prob) ** size
    assert stats.binomtest(ro, n, expected).pvalue > 0.001


def test_sixteen_half_writes_read_only_is_rare():
    # 0.5**16 per txn: about 0.3 expected among 20000
    cfg = WorkloadConfig()
    gen, rng = TxnGenerator(cfg), random.Random(4)
    ro = sum(gen.generate(rng).read_only for _ in range(20_000))
    assert stats.binom.sf(ro - 1, 20_000, 0.5 ** 16) > 0.001


def test_generated_txn_shape_and_determinism():
    cfg = WorkloadConfig(partitions=4, rows_per_partition=50)
    a = generate_txn(cfg, random.Random(9), coordinator=2, seq=5)
    b = generate_txn(cfg, random.Random(9), coordinator=2, seq=5)
    assert a == b
    assert a.id == TxnId(2, 5) and a.coordinator == 2
    keys = [(p, k) for p, acc in a.accesses.items() for k, _ in acc]
    assert len(keys) == 16 == len(set(keys))
    assert a.participants == tuple(sorted(a.accesses))
    assert all(m in (READ, WRITE) for acc in a.accesses.values() for _, m in acc)


def test_forced_read_only_fraction():
    cfg = WorkloadConfig(read_only_fraction=1.0)
    assert generate_txn(cfg, random.Random(0)).read_only


@pytest.mark.parametrize("kw", [dict(write_prob=1.5), dict(zipf_theta=-1), dict(partitions=0),
                                dict(read_only_fraction=-0.1), dict(rows_per_partition=2, partitions=1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        WorkloadConfig(**kw)


def test_lock_compatibility():
    t = LockTable()
    assert t.acquire("k", LockMode.EXCLUSIVE, 1) is LockResult.GRANTED
    assert t.acquire("k", LockMode.SHARED, 2) is LockResult.NOWAIT_ABORT
    t.release("k", 1)
    assert t.state("k") == ("FREE", frozenset())
    assert t.acquire("k", LockMode.SHARED, 1) is LockResult.GRANTED
    assert t.acquire("k", LockMode.SHARED, 2) is LockResult.GRANTED
    assert t.acquire("k", LockMode.EXCLUSIVE, 3) is LockResult.NOWAIT_ABORT
    assert t.acquire("k", LockMode.EXCLUSIVE, 1) is LockResult.NOWAIT_ABORT  # upgrade blocked by txn 2
    t.release("k", 2)
    assert t.acquire("k", LockMode.EXCLUSIVE, 1) is LockResult.GRANTED  # sole holder upgrades
    assert t.state("k") == ("EXCLUSIVE", frozenset({1}))


def test_acquire_all_is_all_or_nothing():
    t = LockTable()
    t.acquire(3, LockMode.EXCLUSIVE, "other")
    assert acquire_all(t, [(1, WRITE), (2, READ), (3, READ)], "me") is None
    assert t.held_by("me") == []
    assert acquire_all(t, [(1, WRITE), (2, READ)], "me") == [1, 2]


def test_two_writers_on_one_key_exactly_one_aborts():
    t = LockTable()
    results = [acquire_all(t, [(7, WRITE)], txn) for txn in ("a", "b")]
    assert sum(r is None for r in results) == 1


def _txn(parts, coordinator=0, seq=1, mode=WRITE):
    return Transaction(TxnId(coordinator, seq), coordinator, tuple(parts), {p: ((p * 10, mode),) for p in parts})


def test_execution_single_partition_is_local():
    assert run_execution_phase(_txn([0])) == (READY, 0)


def test_execution_three_partitions_one_round_trip():
    assert run_execution_phase(_txn([0, 1, 2]), one_way=250) == (READY, 500)


def test_execution_conflict_aborts_early():
    assert run_execution_phase(_txn([0, 1, 2]), held=[(2, 20, WRITE, "other")])[0] == ABORTED_EARLY


def test_execution_crashed_participant_aborts_early():
    status, at = run_execution_phase(_txn([0, 1, 2]), crash=[2])
    assert status == ABORTED_EARLY and at > 500
