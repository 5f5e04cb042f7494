import csv
import io
from pathlib import Path

import pytest

from cornus.bench import CSV_COLUMNS, BenchConfig, bench
from cornus.cli import main

GOLDEN = Path(__file__).parent / "golden"


def test_csv_schema():
    rows = list(csv.DictReader(io.StringIO(bench(BenchConfig(duration_us=20_000)).to_csv())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [r["txn_class"] for r in rows] == ["single", "distributed", "read_only", "all"]


def test_same_seed_same_report():
    cfg = BenchConfig(seed=3, duration_us=50_000, theta=0.9)
    assert bench(cfg).to_csv() == bench(cfg).to_csv()


def test_phases_add_up_to_latency():
    report = bench(BenchConfig(seed=1, duration_us=100_000, theta=0.9, workers=2))
    assert report.records
    for r in report.records:
        assert r.exec_us + r.prepare_us + r.commit_us + r.abort_us == r.latency
    assert any(r.attempts > 1 for r in report.records)


def test_abort_rate_counts_retries():
    report = bench(BenchConfig(seed=1, duration_us=100_000, theta=0.9, workers=2))
    s = report.stats("all")
    attempts = sum(r.attempts for r in report.records)
    assert s.abort_rate == pytest.approx((attempts - len(report.records)) / attempts)


def test_txn_budget():
    report = bench(BenchConfig(max_txns=10, duration_us=10**9))
    assert len(report.records) == 10


def test_read_only_known_skips_both_phases():
    for protocol in ("cornus", "2pc"):
        s = bench(BenchConfig(protocol=protocol, read_only_fraction=0.5, duration_us=100_000)).stats("read_only")
        assert s.count > 0 and s.prepare_us == 0 and s.commit_us == 0


def test_config_validation():
    for kw in (dict(protocol="3pc"), dict(termination="eager"), dict(nodes=0), dict(duration_us=0)):
        with pytest.raises(ValueError):
            BenchConfig(**kw)


@pytest.mark.parametrize("protocol", ["cornus", "2pc"])
def test_golden_csv(protocol, capsys):
    assert main(["bench", "--protocol", protocol, "--seed", "7", "--duration-virtual-ms", "100"]) == 0
    assert capsys.readouterr().out == (GOLDEN / f"bench_{protocol}_seed7.csv").read_text()


def test_cli_writes_csv_file(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["bench", "--duration-virtual-ms", "20", "--out", str(out), "--storage-model", "paxos:250"]) == 0
    assert out.read_text().startswith(",".join(CSV_COLUMNS))


@pytest.mark.parametrize("argv", [
    ["bench", "--protocol", "cornus", "--termination", "naive"],
    ["bench", "--write-prob", "2"],
    ["bench", "--storage-model", "fixed:x"],
    ["bench", "--storage", "redis"],
    ["bench", "--smoke"],
    ["bench", "--ro-known", "maybe"],
    ["bench", "--faults", "x:y"],
    ["verify", "--nodes", "9"],
])
def test_cli_rejects_bad_flags(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_cli_timeouts_env(monkeypatch, capsys):
    monkeypatch.setenv("CORNUS_TIMEOUTS", "1,2")
    with pytest.raises(SystemExit):
        main(["bench", "--duration-virtual-ms", "5"])
    monkeypatch.setenv("CORNUS_TIMEOUTS", "20000,20000,20000,3000")
    assert main(["bench", "--duration-virtual-ms", "5"]) == 0


def test_cli_simulate_then_check(tmp_path, capsys):
    path = tmp_path / "t.trace"
    assert main(["simulate", "--protocol", "2pc", "--faults", "0:at=251", "--out", str(path)]) == 0
    assert main(["check", str(path)]) == 0  # blocked 2PC is tolerated
    assert '"BLOCKED"' in capsys.readouterr().out
    tampered = tmp_path / "bad.trace"
    tampered.write_text(path.read_text() + '99999\t1\tDECIDE\t{"decision":"COMMIT","role":"participant","txn":"t0.1"}\n')
    assert main(["check", str(tampered)]) == 1
    assert main(["check", str(tmp_path / "missing.trace")]) == 2


def test_cli_simulate_vote_no(capsys):
    assert main(["simulate", "--vote-no", "2"]) == 0
    assert '"decision":"ABORT"' in capsys.readouterr().out


def test_cli_storage_down(capsys):
    assert main(["verify", "--storage-down"]) == 0
    assert "storage down" in capsys.readouterr().out
