"""Command-line front end: ``bench``, ``verify``, ``simulate``, ``check``."""
from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

from .bench import BenchConfig, bench
from .check import FAIL, CheckError, check, check_all
from .redis_store import ENDPOINT_ENV, data_key, state_key
from .sim.engine import ConfigError, FaultPlan, NetworkModel, Timeouts
from .sim.explore import explorer_txn
from .sim.run import run as run_sim
from .storage import REDIS_CONDITIONAL_WRITE_US, parse_storage_model
from .trace import Trace, TraceFormatError

TIMEOUTS_ENV = "CORNUS_TIMEOUTS"  # "vote,decision,termination,retry" in µs
REDIS_TIMEOUT_ENV = "CORNUS_REDIS_TIMEOUT_MS"


def _yes_no(text: str) -> bool:
    if text not in ("yes", "no"):
        raise argparse.ArgumentTypeError("expected yes or no")
    return text == "yes"


def _storage_model(text: str):
    try:
        return parse_storage_model(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _faults(text: str) -> FaultPlan:
    try:
        return FaultPlan.parse(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _env_timeouts() -> Optional[Timeouts]:
    raw = os.environ.get(TIMEOUTS_ENV)
    if not raw:
        return None
    try:
        vals = [int(v) for v in raw.split(",")]
    except ValueError:
        vals = []
    if len(vals) != 4 or min(vals) <= 0:
        raise SystemExit(f"{TIMEOUTS_ENV} must be four positive integers: vote,decision,termination,retry")
    return Timeouts(*vals)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--storage-model", type=_storage_model, default=f"fixed:{REDIS_CONDITIONAL_WRITE_US}",
                   help="fixed:W_us[:R_us] or paxos:d_us[:acceptors] (default %(default)s)")
    p.add_argument("--one-way-us", type=int, default=250, help="one-way network delay (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cornus", description="Cornus and 2PC commit protocols on a simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="closed-loop latency benchmark, CSV output")
    b.add_argument("--protocol", choices=("cornus", "2pc"), default="cornus")
    b.add_argument("--termination", choices=("naive", "cooperative"), default=None, help="2PC only")
    b.add_argument("--storage", choices=("memory", "redis"), default="memory")
    b.add_argument("--endpoint", default=None, help=f"Redis URL (default ${ENDPOINT_ENV})")
    b.add_argument("--smoke", action="store_true", help="with --storage redis: run the live LogOnce scenario")
    b.add_argument("--redis-timeout-ms", type=int, default=None,
                   help=f"connection timeout (default ${REDIS_TIMEOUT_ENV} or 1000)")
    _common(b)
    b.add_argument("--nodes", type=int, default=4)
    b.add_argument("--theta", type=float, default=0.0)
    b.add_argument("--write-prob", type=float, default=0.5)
    b.add_argument("--txn-size", type=int, default=16)
    b.add_argument("--rows", type=int, default=10_000, help="rows per partition")
    b.add_argument("--read-only-fraction", type=float, default=0.0,
                   help="fraction of transactions forced read-only")
    b.add_argument("--ro-known", type=_yes_no, default=True, metavar="{yes,no}")
    b.add_argument("--duration-virtual-ms", type=int, default=1000)
    b.add_argument("--txns", type=int, default=None, help="stop after this many transactions")
    b.add_argument("--workers", type=int, default=1, help="client loops per node")
    b.add_argument("--jitter-us", type=int, default=0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--faults", type=_faults, default=FaultPlan(), metavar="PLAN",
                   help="e.g. '1:at=5000:recover=20000,storage:down=100:up=900'")
    b.add_argument("--out", default=None, metavar="FILE.csv")

    v = sub.add_parser("verify", help="exhaustive crash-point exploration plus checking")
    v.add_argument("--nodes", type=int, default=3)
    v.add_argument("--inject-bug", choices=("skip-logonce",), default=None)
    v.add_argument("--storage-down", action="store_true", help="run the storage-outage scenario instead")
    _common(v)

    s = sub.add_parser("simulate", help="simulate one transaction and write its trace")
    s.add_argument("--protocol", choices=("cornus", "2pc"), default="cornus")
    s.add_argument("--termination", choices=("naive", "cooperative"), default="cooperative")
    s.add_argument("--nodes", type=int, default=3, help="coordinator plus participants")
    s.add_argument("--faults", type=_faults, default=FaultPlan(), metavar="PLAN")
    s.add_argument("--vote-no", type=int, action="append", default=[], metavar="NODE")
    s.add_argument("--seed", type=int, default=0)
    _common(s)
    s.add_argument("--out", default=None, metavar="FILE.trace")

    c = sub.add_parser("check", help="check trace files, one JSON verdict per line")
    c.add_argument("traces", nargs="+")
    c.add_argument("--all", action="store_true", help="print PASS verdicts too")
    return ap


def _write(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_bench(args, ap) -> int:
    if args.storage == "redis":
        if not args.smoke:
            ap.error("--storage redis runs the live smoke test only; add --smoke "
                     "(benchmarks use the simulated storage model)")
        timeout = args.redis_timeout_ms or int(os.environ.get(REDIS_TIMEOUT_ENV, "1000"))
        return _redis_smoke(args.endpoint, timeout)
    if args.smoke:
        ap.error("--smoke needs --storage redis")
    if args.termination and args.protocol != "2pc":
        ap.error("--termination applies to --protocol 2pc only")
    for name in ("theta", "write_prob", "read_only_fraction"):
        val = getattr(args, name)
        if val < 0 or (name != "theta" and val > 1):
            ap.error(f"--{name.replace('_', '-')} out of range: {val}")
    try:
        cfg = BenchConfig(protocol=args.protocol, termination=args.termination or "cooperative", nodes=args.nodes,
                          theta=args.theta, write_prob=args.write_prob, txn_size=args.txn_size, rows=args.rows,
                          read_only_fraction=args.read_only_fraction, ro_known=args.ro_known,
                          storage=args.storage_model, one_way=args.one_way_us, jitter=args.jitter_us,
                          duration_us=args.duration_virtual_ms * 1000, max_txns=args.txns,
                          workers=args.workers, seed=args.seed, faults=args.faults, timeouts=_env_timeouts())
        report = bench(cfg)
    except (ValueError, ConfigError) as exc:
        ap.error(str(exc))
    _write(report.to_csv(), args.out)
    return 0


def _redis_smoke(endpoint: Optional[str], timeout_ms: int = 1000) -> int:
    try:
        import redis  # noqa: F401
    except ImportError:
        print("the redis package is not installed (pip install 'artifact[redis]')", file=sys.stderr)
        return 2
    import time

    from .core import TxnId
    from .redis_store import RedisLogStore
    from .smoke import compare_with_memory
    from .storage import StorageError

    store = RedisLogStore.from_url(endpoint, timeout_ms)
    seq = time.time_ns() // 1000
    try:
        same, got, want = compare_with_memory(store, seq)
    except StorageError as exc:
        print(f"redis unreachable: {exc}", file=sys.stderr)
        return 2
    finally:
        try:
            keys = [k(log, TxnId(0, s)) for log in ("1", "2") for s in (seq, seq + 1) for k in (state_key, data_key)]
            store.client.delete(*keys)
        except Exception:  # best effort cleanup only
            pass
    for (step, result, state), (_, mem_result, mem_state) in zip(got, want):
        mark = "ok" if (result, state) == (mem_result, mem_state) else "MISMATCH"
        print(f"{mark:<8} {step}: redis={result}/{state} memory={mem_result}/{mem_state}")
    print("smoke: " + ("PASS" if same else "FAIL"))
    return 0 if same else 1


def cmd_verify(args, ap) -> int:
    from .verify import print_suite, run_suite, storage_down

    if not 2 <= args.nodes <= 5:
        ap.error("--nodes must be between 2 and 5")
    if args.storage_down:
        return 0 if storage_down(args.nodes) else 1
    res = run_suite(args.nodes, inject_bug=args.inject_bug, one_way=args.one_way_us, storage=args.storage_model)
    print_suite(res)
    return 0 if res.ok else 1


def cmd_simulate(args, ap) -> int:
    try:
        txn = explorer_txn(args.nodes)
        trace = run_sim(args.protocol, [txn], net=NetworkModel(args.one_way_us), storage=args.storage_model,
                        faults=args.faults, seed=args.seed, timeouts=_env_timeouts(), termination=args.termination,
                        vote_no=[(n, txn.id) for n in args.vote_no])
    except (ValueError, ConfigError) as exc:
        ap.error(str(exc))
    _write(trace.dumps(), args.out)
    return 0


def cmd_check(args, ap) -> int:
    traces = []
    for path in args.traces:
        try:
            with open(path, encoding="utf-8") as f:
                traces.append((path, Trace.loads(f.read())))
        except (OSError, TraceFormatError) as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            return 2
    bad = False
    for path, trace in traces:
        try:
            verdicts = check(trace, path)
        except CheckError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            return 2
        for v in verdicts:
            if args.all or v.status != "PASS":
                print(v.to_json())
        bad |= any(v.status == FAIL for v in verdicts)
    summary = check_all(t for _, t in traces)
    for line in summary.lines():
        print(line, file=sys.stderr)
    return 1 if bad or not summary.ok else 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    handler = {"bench": cmd_bench, "verify": cmd_verify, "simulate": cmd_simulate, "check": cmd_check}
    return handler[args.command](args, ap)


if __name__ == "__main__":
    sys.exit(main())
