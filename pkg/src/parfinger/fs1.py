"""Batched parallel finger structure.

A batch is first filtered through the ``m`` smallest sections (the first
slab) with unsorted searches.  Only what survives or actually changes the
first slab gets entropy-sorted, then executed section by section, and a
single sweep per chain restores balance.
"""

from __future__ import annotations

import math
import threading
from bisect import bisect_left, bisect_right
from collections.abc import Iterable, Sequence
from concurrent.futures import Future
from operator import attrgetter
from typing import Any

from . import errors
from .batch import Batch, partition_sorted
from .bpmap import BPMap
from .cost import CostLedger
from .meter import Meter
from .ops import ABSENT, Call, GroupOperation, Kind, Operation, OpResult
from .segments import Chains
from .sort import pesort
from .sync import ParallelBuffer, ReactivationWrapper

_key = attrgetter("key")
_kind = attrgetter("kind")
_skey = attrgetter("skey")


def first_slab_size(b: int) -> int:
    """m = ceil(log2 log2 (2b)) + 1, with b clamped to at least 2."""
    b = max(b, 2)
    return math.ceil(math.log2(math.log2(2 * b))) + 1


def inward_distances(keys: Sequence[Any]) -> list[int]:
    """min(#keys <= x, #keys >= x) for each x of a sorted distinct list."""
    n = len(keys)
    return [min(i + 1, n - i) for i in range(n)]


def group_calls(calls: list[Call], meter: Meter) -> list[GroupOperation]:
    if not calls:
        return []
    return [GroupOperation(b) for b in pesort(calls, key=_skey, meter=meter)]


class FS1:
    def __init__(self, items: Iterable[tuple[Any, Any]] = (), p: int = 4, record: bool = True) -> None:
        self.segments = Chains()
        self.ledger = CostLedger()
        self.p = p
        self.record = record
        self.linearization: list[Operation] = []
        self.batches = 0
        self.max_chain_iterations = 0
        self.last_batch: dict[str, Any] = {}
        self.errors: list[BaseException] = []
        self._lock = threading.Lock()
        self._buffer: ParallelBuffer | None = None
        self._wrapper: ReactivationWrapper | None = None
        pairs = list(items)
        if pairs:
            rec = self.record
            self.record = False
            self.process_batch([Operation(Kind.INSERT, k, v) for k, v in pairs])
            self.record = rec
            self.ledger = CostLedger()
            self.batches = 0

    def __len__(self) -> int:
        return self.segments.total()

    def items(self) -> list[tuple[Any, Any]]:
        return self.segments.items()

    def violations(self, deep: bool = False) -> list[str]:
        return self.segments.violations(deep)

    def max_level(self) -> int:
        return len(self.segments) - 1

    # -- batch processing --------------------------------------------------

    def process_batch(self, ops: Sequence[Operation]) -> list[OpResult]:
        calls = [Call(op) for op in ops]
        self.process_calls(calls)
        return [c.result for c in calls]

    def process_calls(self, calls: list[Call]) -> None:
        if not calls:
            return
        segs = self.segments
        segs.touched = -1
        m = first_slab_size(len(calls))
        first_reached, residual = self.preliminary(calls, m)
        ineffectual, eff_groups, res_groups = self.separate(calls, residual)
        first_exec = self.execute_slab(eff_groups, 0, m)
        final_exec = self.execute_slab(res_groups, m, len(segs)) if res_groups else m - 1
        iters = self.rebalance(m, first_exec, final_exec)
        self.batches += 1
        self.last_batch = {
            "size": len(calls),
            "m": m,
            "first_probed": first_reached,
            "first_executed": first_exec,
            "final_executed": final_exec,
            "chain_iterations": iters,
            "ineffectual": len(ineffectual),
            "touched": segs.touched,
        }
        if self.record:
            self.linearization.extend(linearize(ineffectual, eff_groups + res_groups))

    def preliminary(self, calls: list[Call], m: int) -> tuple[int, list[Call]]:
        return preliminary(self.segments, calls, m, self.ledger)

    def separate(
        self, calls: list[Call], residual: list[Call]
    ) -> tuple[list[Call], list[GroupOperation], list[GroupOperation]]:
        return separate(calls, residual, self.ledger)

    def execute_slab(self, groups: list[GroupOperation], lo: int, hi: int) -> int:
        return execute_slab(self.segments, groups, lo, hi, self.ledger)

    def rebalance(self, m: int, first_exec: int, final_exec: int) -> int:
        segs = self.segments

        def skipped(k: int) -> bool:
            return k > first_exec if k < m else k > final_exec

        meter = Meter()
        check = errors.DEBUG
        meter.fork(
            lambda: segs.sweep(0, meter, skipped, (m,), check=check),
            lambda: segs.sweep(1, meter, skipped, (m,), check=check),
        )
        iters = segs.rebalance_chains(meter, cap=2)
        self.max_chain_iterations = max(self.max_chain_iterations, iters)
        self.ledger.record("rebalance", meter)
        return iters

    # -- implicit batching --------------------------------------------------

    def submit(self, op: Operation, slot: int | None = None) -> Future:
        """Queue ``op``; the returned future resolves when its batch is done."""
        if self._buffer is None:
            with self._lock:
                if self._buffer is None:
                    self._wrapper = ReactivationWrapper(self._run, on_error=self.errors.append)
                    self._buffer = ParallelBuffer(self.p, self._wrapper.reactivate)
        fut: Future = Future()
        self._buffer.submit(Call(op, future=fut), slot)
        return fut

    def _run(self) -> None:
        batch = self._buffer.flush()
        if not len(batch):
            return
        calls = list(batch)
        with self._lock:
            try:
                self.process_calls(calls)
            except BaseException as e:
                for c in calls:
                    c.fail(e)
                raise


def preliminary(segs: Chains, calls: list[Call], m: int, ledger: CostLedger) -> tuple[int, list[Call]]:
    """Probe the first ``m`` sections; tag fitting calls with level, side and hit.

    Returns the last section probed and the calls that fit nowhere in it.
    """
    top = len(segs) - 1
    rem = calls
    reached = -1
    for k in range(min(m, top + 1)):
        if not rem:
            break
        reached = k
        meter = Meter()
        last = segs.top_is_last(k)
        rest: list[Call] = []
        buckets: tuple[list[Call], list[Call]] = ([], [])
        for c in rem:
            side = segs.fit_at(c.key, k, meter, last)
            if side < 0:
                rest.append(c)
            else:
                c.level = k
                c.side = side
                buckets[side].append(c)
        segs._touch(k)

        def probe(side: int) -> None:
            group = buckets[side]
            if not group:
                return
            found = segs.chains[side][k].map.unsorted_batch_search([c.key for c in group], meter)
            for c, r in zip(group, found):
                c.hit = r.found

        meter.fork(lambda: probe(0), lambda: probe(1))
        ledger.record("preliminary", meter, [c.op.id for c in rem])
        rem = rest
    return reached, rem


def separate(
    calls: list[Call], residual: list[Call], ledger: CostLedger
) -> tuple[list[Call], list[GroupOperation], list[GroupOperation]]:
    """Resolve ineffectual calls and entropy-sort the rest into groups."""
    ineffectual: list[Call] = []
    effectual: list[Call] = []
    for c in calls:
        if c.level < 0:
            continue
        if c.hit or c.kind == Kind.INSERT:
            effectual.append(c)
        else:
            ineffectual.append(c)
    for c in ineffectual:
        c.resolve(ABSENT)
    meter = Meter()
    eff_groups, res_groups = meter.fork(
        lambda: group_calls(effectual, meter), lambda: group_calls(residual, meter)
    )
    ledger.record("separation", meter, [c.op.id for c in effectual] + [c.op.id for c in residual])
    return ineffectual, eff_groups, res_groups


def execute_slab(
    segs: Chains, groups: list[GroupOperation], lo: int, hi: int, ledger: CostLedger
) -> int:
    """Apply sorted groups to sections lo..hi-1; return the last one used."""
    if not groups:
        return lo - 1
    top = len(segs) - 1
    pending = partition_sorted(Batch(groups), [0, 1, 2], key=_kind)
    done = lo - 1
    for k in range(lo, min(hi, top + 1)):
        if not any(len(g) for g in pending):
            break
        done = k
        segs._touch(k)
        run_section(segs.map_pair(k), segs.top_is_last(k), pending, ledger, "execute")
    return done


def run_section(
    maps: tuple[BPMap | None, BPMap | None],
    last: bool,
    pending: list[Batch],
    ledger: CostLedger,
    phase: str,
    deliver=None,
) -> list[Operation]:
    """Cut and apply the group-ops fitting one section, per side then per kind.

    ``maps`` are the section's two segment maps (None where a chain is
    shorter).  ``pending`` holds four key-sorted batches (one per kind) and
    is updated in place to what remains.  ``deliver(group, found, prior)``
    replaces the default immediate fan-out.  Returns the applied operations.
    """
    applied: list[Operation] = []
    m0, m1 = maps
    for side in (0, 1):
        seg = maps[side]
        if seg is None:
            continue
        if side == 0:
            if last:
                pivot, strict, take_low = (m1.min_key(), True, True) if m1 else (None, False, True)
            elif seg:
                pivot, strict, take_low = seg.max_key(), False, True
            else:
                continue
        else:
            if last:
                pivot, strict, take_low = None, False, False
            elif seg:
                pivot, strict, take_low = seg.min_key(), True, False
            else:
                continue
        meter = Meter()
        ids: list[int] = []
        for a in range(4):
            g = pending[a]
            if not len(g):
                continue
            if pivot is None:
                fit, rest = g, Batch()
            else:
                lo_part, hi_part = partition_sorted(g, [pivot], key=_key, meter=meter, strict=strict)
                fit, rest = (lo_part, hi_part) if take_low else (hi_part, lo_part)
            pending[a] = rest
            if not len(fit):
                continue
            found = seg.sorted_batch_access(fit, meter)
            for grp, r in zip(fit, found):
                if deliver is None:
                    grp.fan_out(r.found, r.value)
                else:
                    deliver(grp, r.found, r.value)
                ids.extend(c.op.id for c in grp.members)
                applied.extend(c.op for c in grp.members)
        if ids:
            ledger.record(phase, meter, ids)
    return applied


def linearize(ineffectual: list[Call], groups: list[GroupOperation]) -> list[Operation]:
    """The canonical order of one batch: ineffectual calls, then searches and
    updates by key, inserts inward, deletes outward, members consecutive."""
    order = [c.op for c in ineffectual]
    by_kind: list[list[GroupOperation]] = [[], [], [], []]
    for g in groups:
        by_kind[g.kind].append(g)
    for a in (Kind.SEARCH, Kind.UPDATE):
        for g in sorted(by_kind[a], key=_key):
            order.extend(c.op for c in g.members)
    for a, outward in ((Kind.INSERT, False), (Kind.DELETE, True)):
        gs = sorted(by_kind[a], key=_key)
        dist = inward_distances([g.key for g in gs])
        idx = sorted(range(len(gs)), key=lambda j: (-dist[j] if outward else dist[j], j))
        for j in idx:
            order.extend(c.op for c in gs[j].members)
    return order


def fs1_process_batch(s: FS1, ops: Sequence[Operation]) -> list[OpResult]:
    return s.process_batch(ops)


def fs1_submit(s: FS1, op: Operation) -> Future:
    return s.submit(op)
