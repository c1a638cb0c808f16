"""Hammer the pipelined structure from several submitter threads.

Each round submits ``--round`` random operations spread over ``--p``
threads, waits for the pipeline to drain, then scans invariants and checks
every result against the reference map replayed in run-finish order.

    python3 scripts/fs2_stress.py --p 4 --n 200000 --keyspace 50000
"""

import argparse
import random
import sys
import threading
import time

from parfinger import set_debug
from parfinger.cost import FingerOracle, verify_linearization
from parfinger.fs2 import FS2
from parfinger.ops import Kind, Operation


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, default=4)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--keyspace", type=int, default=20_000)
    ap.add_argument("--round", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--debug", action="store_true", help="run internal contract checks too")
    args = ap.parse_args(argv)
    set_debug(args.debug)

    rng = random.Random(args.seed)
    s = FS2(p=args.p, log_activity=False)
    oracle = FingerOracle()
    done = 0
    t0 = time.perf_counter()
    while done < args.n:
        size = min(args.round, args.n - done)
        ops = [Operation(Kind(rng.randrange(4)), rng.randrange(args.keyspace), rng.randrange(1 << 20)) for _ in range(size)]
        results: dict = {}
        lock = threading.Lock()

        def worker(w: int) -> None:
            futs = [(op.id, s.submit(op, w)) for op in ops[w :: args.p]]
            got = {i: f.result(timeout=120) for i, f in futs}
            with lock:
                results.update(got)

        start = len(s.linearization)
        threads = [threading.Thread(target=worker, args=(w,)) for w in range(args.p)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        s.quiesce()
        bad = s.violations()
        verdict = verify_linearization(results, s.linearization[start:], oracle=oracle)
        done += size
        print(
            f"{done:>9d} ops  items={len(s):<7d} level={s.max_level()} first_runs={s.first_runs} "
            f"deferrals={s.deferrals} violations={len(bad)} oracle={'ok' if verdict else 'MISMATCH'}"
        )
        if bad or not verdict:
            for v in bad[:5]:
                print("  ", v)
            return 1
    print(f"ok in {time.perf_counter() - t0:.1f}s, work={s.ledger.total_work}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
