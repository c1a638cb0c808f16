"""Work / finger-bound ratio across trace lengths, per structure and workload.

    python3 scripts/ratio_sweep.py --n 1000 10000 100000 --csv sweep.csv
"""

import argparse
import csv
import sys
import time

from parfinger.harness import WorkloadSpec, run

WORKLOADS = ("uniform", "zipf", "finger-local")


def sweep_spec(structure: str, dist: str, n: int, seed: int = 0, p: int = 4) -> WorkloadSpec:
    return WorkloadSpec(
        structure=structure,
        n_ops=n,
        key_space=4 * n,
        distribution=dist,
        lam=0.9,
        zipf_s=1.1,
        p=p,
        seed=seed,
        batch_profile=(64,),
        preload=n // 2,
        fingers=2,
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[1000, 10000, 100000])
    ap.add_argument("--structures", nargs="+", default=["fs0", "fs1", "fs2", "mf"])
    ap.add_argument("--workloads", nargs="+", default=list(WORKLOADS))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="write rows here")
    args = ap.parse_args(argv)

    rows = []
    for dist in args.workloads:
        for name in args.structures:
            ratios = []
            for n in args.n:
                t0 = time.perf_counter()
                rep = run(sweep_spec(name, dist, n, args.seed))
                ratios.append(rep.ratio)
                rows.append((dist, name, n, rep.total_work, round(rep.F_L, 1), round(rep.ratio, 4), rep.passed))
                print(f"{dist:13s} {name:4s} n={n:<7d} ratio={rep.ratio:7.3f} ok={rep.passed} {time.perf_counter() - t0:5.1f}s")
            print(f"{dist:13s} {name:4s} spread={max(ratios) / min(ratios):.3f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("workload", "structure", "n", "work", "F_L", "ratio", "passed"))
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
