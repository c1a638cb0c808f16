"""Workload generation, replay against every structure, oracle checking and
CSV reporting of work against the finger bound."""

from __future__ import annotations

import argparse
import bisect
import csv
import gc
import io
import math
import random
import sys
import threading
import time
from collections.abc import Sequence
from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np

from . import errors
from .cost import FingerOracle, verify_linearization
from .fs0 import FS0
from .fs1 import FS1
from .fs2 import FS2
from .multifinger import FingerMove, MultiFingerFS
from .ops import NEG_INF, POS_INF, Kind, Operation, OpResult
from .segments import CAP, TARGET

STRUCTURES = ("fs0", "fs1", "fs2", "mf")
DISTRIBUTIONS = ("uniform", "finger-local", "zipf", "adversarial-cascade")
FS2_SWITCH_INTERVAL = 0.02
CSV_COLUMNS = (
    "structure",
    "n_ops",
    "p",
    "total_work",
    "F_L",
    "ratio",
    "max_segment_level",
    "invariant_failures",
    "wall_time",
)


class ConfigError(ValueError):
    pass


@dataclass
class WorkloadSpec:
    structure: str = "fs1"
    n_ops: int = 10_000
    key_space: int = 1 << 20
    distribution: str = "uniform"
    lam: float = 0.9
    zipf_s: float = 1.1
    p: int = 4
    seed: int = 0
    batch_profile: tuple[int, ...] = (64,)
    preload: int = 0
    fingers: int = 0
    mix: tuple[float, float, float, float] = (0.3, 0.2, 0.3, 0.2)
    check_every: int = 0
    single_submitter: bool = False

    def validate(self) -> None:
        if self.structure not in STRUCTURES:
            raise ConfigError(f"unknown structure {self.structure!r}")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution {self.distribution!r}")
        if self.n_ops < 0 or self.key_space < 1 or self.p < 1 or self.preload < 0 or self.fingers < 0:
            raise ConfigError("counts must be non-negative and key_space, p positive")
        if self.preload > self.key_space:
            raise ConfigError("preload exceeds key space")
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError("finger-local lambda must lie in (0, 1]")
        if self.zipf_s <= 1.0:
            raise ConfigError("zipf exponent must exceed 1")
        if len(self.mix) != 4 or min(self.mix) < 0 or sum(self.mix) <= 0:
            raise ConfigError("mix needs four non-negative weights")
        if not self.batch_profile or min(self.batch_profile) < 1:
            raise ConfigError("batch sizes must be positive")


# -- generation ------------------------------------------------------------------


def preload_items(spec: WorkloadSpec) -> list[tuple[int, int]]:
    """Evenly spread initial contents."""
    n = spec.preload
    if not n:
        return []
    step = spec.key_space / n
    return [(int(i * step), int(i * step)) for i in range(n)]


def generate(spec: WorkloadSpec) -> list[Operation]:
    """The deterministic trace described by ``spec``."""
    spec.validate()
    rng = random.Random(spec.seed)
    n = spec.n_ops
    if n == 0:
        return []
    kinds = rng.choices(list(Kind), weights=spec.mix, k=n)
    if spec.distribution == "uniform":
        keys = [rng.randrange(spec.key_space) for _ in range(n)]
        return [Operation(a, k, rng.randrange(1 << 30)) for a, k in zip(kinds, keys)]
    if spec.distribution == "zipf":
        nrng = np.random.default_rng(spec.seed)
        ranks = nrng.zipf(spec.zipf_s, size=n)
        perm = nrng.permutation(spec.key_space)
        keys = [int(perm[(int(r) - 1) % spec.key_space]) for r in ranks]
        return [Operation(a, k, rng.randrange(1 << 30)) for a, k in zip(kinds, keys)]
    if spec.distribution == "finger-local":
        return _finger_local(spec, rng, kinds)
    return _cascade(spec, rng)


def _geometric(rng: random.Random, lam: float) -> int:
    """Distance >= 1 with P(d) = lam (1 - lam)^(d-1)."""
    if lam >= 1.0:
        return 1
    u = rng.random()
    return 1 + int(math.log(1.0 - u) / math.log(1.0 - lam))


def _finger_local(spec: WorkloadSpec, rng: random.Random, kinds: list[Kind]) -> list[Operation]:
    present = [k for k, _ in preload_items(spec)]
    space = spec.key_space
    ops = []
    for a in kinds:
        d = _geometric(rng, spec.lam)
        front = rng.random() < 0.5
        if a == Kind.INSERT or not present:
            key = _free_key_near(present, d, front, space, rng)
            if key is None:
                key = present[0] if front else present[-1]
            elif a == Kind.INSERT:
                bisect.insort(present, key)
        else:
            d = min(d, len(present))
            idx = d - 1 if front else len(present) - d
            key = present[idx]
            if a == Kind.DELETE:
                del present[idx]
        ops.append(Operation(a, key, rng.randrange(1 << 30)))
    return ops


def _free_key_near(present: list[int], d: int, front: bool, space: int, rng: random.Random) -> int | None:
    """An absent key whose insertion rank lies about ``d`` from one end."""
    n = len(present)
    if n == 0:
        return rng.randrange(space)
    d = min(d, n + 1)
    for shift in range(n + 1):
        r = d - 1 + shift if front else n + 1 - d - shift
        if not 0 <= r <= n:
            break
        lo = present[r - 1] + 1 if r > 0 else 0
        hi = present[r] - 1 if r < n else space - 1
        if lo <= hi:
            return lo + (hi - lo) // 2 if hi - lo > 2 else rng.randint(lo, hi)
    return None


def _cascade(spec: WorkloadSpec, rng: random.Random) -> list[Operation]:
    """Fill/drain blocks at alternating ends, sized to just overflow ever
    deeper levels, so rebalancing cascades through the whole chain."""
    present = [k for k, _ in preload_items(spec)]
    space = spec.key_space
    sizes = [TARGET[k] + CAP[k] + 1 for k in range(4) if TARGET[k] + CAP[k] + 1 <= max(spec.n_ops, 1)]
    sizes = sizes or [1]
    ops: list[Operation] = []
    level = 0
    while len(ops) < spec.n_ops:
        block = sizes[level % len(sizes)]
        front = (level // len(sizes)) % 2 == 0
        level += 1
        added: list[int] = []
        for _ in range(block):
            key = _free_key_near(present, 1, front, space, rng)
            if key is None:
                break
            bisect.insort(present, key)
            added.append(key)
            ops.append(Operation(Kind.INSERT, key, key))
        for key in added:
            ops.append(Operation(Kind.SEARCH, key))
        for key in reversed(added):
            present.remove(key)
            ops.append(Operation(Kind.DELETE, key))
    return ops[: spec.n_ops]


# -- ops files -------------------------------------------------------------------


def _atom(tok: str) -> Any:
    for conv in (int, float):
        try:
            return conv(tok)
        except ValueError:
            pass
    return tok


def parse_ops(text: str) -> list[Operation | FingerMove]:
    """One op per line: ``<S|U|I|D> <key> [<value>]`` or
    ``M <finger> <key|-inf|+inf> [after|before]``; ``#`` starts a comment."""
    out: list[Operation | FingerMove] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        head = toks[0].upper()
        try:
            if head == "M":
                finger = int(toks[1])
                pos = toks[2]
                if pos in (NEG_INF, POS_INF):
                    cut: Any = pos
                else:
                    after = len(toks) > 3 and toks[3].lower() == "after"
                    cut = (_atom(pos), after)
                out.append(FingerMove(finger, cut))
            else:
                kind = Kind.from_letter(head)
                value = _atom(toks[2]) if len(toks) > 2 else None
                out.append(Operation(kind, _atom(toks[1]), value))
        except (IndexError, ValueError) as e:
            raise ConfigError(f"line {lineno}: cannot parse {raw!r}") from e
    return out


def format_ops(ops: Sequence[Operation | FingerMove]) -> str:
    lines = []
    for op in ops:
        if isinstance(op, FingerMove):
            if op.cut in (NEG_INF, POS_INF):
                lines.append(f"M {op.finger} {op.cut}")
            else:
                key, after = op.cut
                lines.append(f"M {op.finger} {key} {'after' if after else 'before'}")
        elif op.value is None:
            lines.append(f"{op.kind.letter} {op.key}")
        else:
            lines.append(f"{op.kind.letter} {op.key} {op.value}")
    return "\n".join(lines) + ("\n" if lines else "")


# -- running -----------------------------------------------------------------------


@dataclass
class Report:
    structure: str
    n_ops: int
    p: int
    total_work: int
    F_L: float
    ratio: float
    max_segment_level: int
    invariant_failures: int
    wall_time: float
    oracle_ok: bool = True
    mismatch_id: int | None = None
    failures: list[str] = field(default_factory=list)
    contents: list[tuple[Any, Any]] = field(default_factory=list, repr=False)
    results: dict[int, OpResult] = field(default_factory=dict, repr=False)
    charges: dict[int, float] = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return self.oracle_ok and self.invariant_failures == 0

    def row(self, timing: bool = True) -> list[str]:
        return [
            self.structure,
            str(self.n_ops),
            str(self.p),
            str(self.total_work),
            f"{self.F_L:.3f}",
            f"{self.ratio:.4f}",
            str(self.max_segment_level),
            str(self.invariant_failures),
            f"{self.wall_time:.3f}" if timing else "",
        ]


def finger_positions(spec: WorkloadSpec) -> list[Any]:
    """``spec.fingers`` movable fingers spread evenly over the key space."""
    f = spec.fingers
    return [(spec.key_space * (j + 1) // (f + 1), False) for j in range(f)]


def _batches(ops: Sequence[Any], profile: Sequence[int]) -> list[Sequence[Any]]:
    out = []
    i = 0
    j = 0
    while i < len(ops):
        b = profile[j % len(profile)]
        out.append(ops[i : i + b])
        i += b
        j += 1
    return out


def run(spec: WorkloadSpec, ops: Sequence[Operation | FingerMove] | None = None) -> Report:
    """Execute a trace on ``spec.structure``, check it, and report.

    The cyclic garbage collector is paused for the run, as ``timeit`` does:
    the structures are acyclic trees, and full collections would otherwise
    rescan every live node repeatedly.
    """
    enabled = gc.isenabled()
    gc.disable()
    try:
        return _run(spec, ops)
    finally:
        if enabled:
            gc.enable()


def _run(spec: WorkloadSpec, ops: Sequence[Operation | FingerMove] | None) -> Report:
    spec.validate()
    if ops is None:
        ops = generate(spec)
    initial = preload_items(spec)
    moves = [op for op in ops if isinstance(op, FingerMove)]
    if moves and spec.structure != "mf":
        raise ConfigError("finger moves only apply to the mf structure")
    check_every = spec.check_every
    failures: list[str] = []

    def check(s) -> None:
        bad = s.violations()
        if bad:
            failures.append(bad[0])

    t0 = time.perf_counter()
    results: dict[int, OpResult] = {}
    if spec.structure == "fs0":
        s: Any = FS0(initial)
        order: list[Any] = []
        for i, op in enumerate(ops, 1):
            results[op.id] = s.execute(op)
            order.append(op)
            if check_every and i % check_every == 0:
                check(s)
    elif spec.structure in ("fs1", "mf"):
        if spec.structure == "fs1":
            s = FS1(initial, p=spec.p)
        else:
            s = MultiFingerFS(initial, finger_positions(spec), p=spec.p)
        done = 0
        profile = (1,) if spec.single_submitter else spec.batch_profile
        for batch in _batches(ops, profile):
            res = s.process_batch(batch)
            for op, r in zip(batch, res):
                if isinstance(op, Operation):
                    results[op.id] = r
            done += len(batch)
            if check_every and (check_every <= len(batch) or done % check_every < len(batch)):
                check(s)
        order = s.linearization
    else:
        # long GIL slices: the pipeline hands work between many short-lived
        # threads and thrashes at the default interval
        old = sys.getswitchinterval()
        sys.setswitchinterval(FS2_SWITCH_INTERVAL)
        try:
            s = FS2(initial, p=spec.p)
            _drive_fs2(s, ops, spec, results, lambda: check(s))
        finally:
            sys.setswitchinterval(old)
        order = s.linearization
    check(s)
    wall = time.perf_counter() - t0

    oracle = FingerOracle(initial)
    if spec.structure == "mf":
        oracle.set_fingers(finger_positions(spec))
    verdict = verify_linearization(results, order, oracle=oracle)
    if not verdict.ok:
        failures.append(f"oracle mismatch at op {verdict.mismatch_id}")
    contents = s.items()
    if contents != oracle.contents():
        failures.append("final contents differ from the reference map")
    work = s.ledger.total_work
    f_l = verdict.f_total
    invariant_count = len([f for f in failures if not f.startswith("oracle")])
    return Report(
        structure=spec.structure,
        n_ops=len(ops),
        p=spec.p,
        total_work=work,
        F_L=f_l,
        ratio=work / f_l if f_l else 0.0,
        max_segment_level=s.max_level(),
        invariant_failures=invariant_count,
        wall_time=wall,
        oracle_ok=verdict.ok,
        mismatch_id=verdict.mismatch_id,
        failures=failures,
        contents=contents,
        results=results,
        charges=dict(s.ledger.per_op_charge),
    )


def _drive_fs2(s: FS2, ops: Sequence[Operation], spec: WorkloadSpec, results: dict, check) -> None:
    """``p`` workers submit round-robin shares; the structure is drained and
    scanned at the end of every round of ``check_every`` operations."""
    p = spec.p
    round_len = spec.check_every or len(ops) or 1
    lock = threading.Lock()
    if spec.single_submitter:
        for i, op in enumerate(ops, 1):
            results[op.id] = s.submit(op, 0).result(timeout=120)
            if i % round_len == 0:
                s.quiesce()
                check()
        return

    def worker(w: int, chunk: Sequence[Operation]) -> None:
        futs = [(op, s.submit(op, w)) for op in chunk[w::p]]
        got = {op.id: f.result(timeout=120) for op, f in futs}
        with lock:
            results.update(got)

    for lo in range(0, len(ops), round_len):
        chunk = ops[lo : lo + round_len]
        threads = [threading.Thread(target=worker, args=(w, chunk)) for w in range(p)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        s.quiesce()
        check()


def differential(spec: WorkloadSpec, ops: Sequence[Operation] | None = None) -> tuple[bool, list[Report]]:
    """Replay one trace on fs0, fs1, fs2 and mf without fingers, one call
    at a time (each waits for the previous result); true iff all final
    contents agree."""
    if ops is None:
        ops = generate(spec)
    reports = []
    for name in STRUCTURES:
        sub = WorkloadSpec(**{f.name: getattr(spec, f.name) for f in fields(spec)})
        sub.structure = name
        sub.single_submitter = True
        if name == "mf":
            sub.fingers = 0
        reports.append(run(sub, ops))
    same = all(r.contents == reports[0].contents for r in reports)
    return same, reports


def write_csv(reports: Sequence[Report], out: io.TextIOBase, timing: bool = True) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.row(timing))


# -- CLI -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parfinger", description=__doc__)
    ap.add_argument("--structure", choices=STRUCTURES, default="fs1")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--ops-file", help="replay this trace instead of generating one")
    src.add_argument("--gen", choices=DISTRIBUTIONS, default="uniform", help="key distribution")
    ap.add_argument("--n", type=int, default=10_000, help="number of generated operations")
    ap.add_argument("--keyspace", type=int, default=1 << 20)
    ap.add_argument("--p", type=int, default=4, help="workers (fs2) / nominal parallelism")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--check-every", type=int, default=0, help="invariant scan period in operations")
    ap.add_argument("--csv", help="write the report to this CSV path ('-' for stdout)")
    ap.add_argument("--lam", type=float, default=0.9, help="finger-local step probability")
    ap.add_argument("--zipf-s", type=float, default=1.1)
    ap.add_argument("--batch", type=int, nargs="+", default=[64], help="fs1/mf batch size profile")
    ap.add_argument("--preload", type=int, default=0, help="items present before the trace")
    ap.add_argument("--fingers", type=int, default=0, help="movable fingers for mf")
    ap.add_argument("--differential", action="store_true", help="compare all structures on one trace")
    ap.add_argument("--single-submitter", action="store_true", help="issue each call after the previous returns")
    ap.add_argument("--no-timing", action="store_true", help="leave wall_time blank for byte-stable CSV")
    ap.add_argument("--emit-trace", help="write the generated trace to this path and exit")
    ap.add_argument("--debug", action="store_true", help="enable internal contract checks")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.debug:
        errors.set_debug(True)
    spec = WorkloadSpec(
        structure=args.structure,
        n_ops=args.n,
        key_space=args.keyspace,
        distribution=args.gen,
        lam=args.lam,
        zipf_s=args.zipf_s,
        p=args.p,
        seed=args.seed,
        batch_profile=tuple(args.batch),
        preload=args.preload,
        fingers=args.fingers,
        check_every=args.check_every,
        single_submitter=args.single_submitter,
    )
    try:
        spec.validate()
        if args.ops_file:
            with open(args.ops_file) as fh:
                ops = parse_ops(fh.read())
        else:
            ops = generate(spec)
        if args.emit_trace:
            with open(args.emit_trace, "w") as fh:
                fh.write(format_ops(ops))
            return 0
        if args.differential:
            if any(isinstance(op, FingerMove) for op in ops):
                raise ConfigError("differential runs take plain map operations only")
            same, reports = differential(spec, ops)
            ok = same and all(r.passed for r in reports)
        else:
            reports = [run(spec, ops)]
            same = True
            ok = reports[0].passed
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (AssertionError, TimeoutError) as e:
        print(f"check failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 1

    if args.csv == "-":
        write_csv(reports, sys.stdout, timing=not args.no_timing)
    elif args.csv:
        buf = io.StringIO()
        write_csv(reports, buf, timing=not args.no_timing)
        with open(args.csv, "w") as fh:
            fh.write(buf.getvalue())
    for r in reports:
        status = "ok" if r.passed else "FAIL"
        print(
            f"{r.structure}: {status} ops={r.n_ops} work={r.total_work} F_L={r.F_L:.1f} "
            f"ratio={r.ratio:.3f} level={r.max_segment_level} wall={r.wall_time:.2f}s",
            file=sys.stderr,
        )
        for f in r.failures[:5]:
            print(f"  {f}", file=sys.stderr)
    if not same:
        print("differential: final contents differ", file=sys.stderr)
    return 0 if ok else 1
