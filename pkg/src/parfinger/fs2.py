"""Pipelined parallel finger structure.

Submitted calls are cut into batches of ``p*p`` and filtered through the
first slab (sections ``0..m-1``, run like the batched structure).  Whatever
fits deeper is pushed into per-section buffers, and each deeper section runs
on its own, holding the two locks it shares with its neighbours.  Sections
whose neighbours are too busy or imbalanced defer, to be woken by the
neighbour once it has caught up.
"""

from __future__ import annotations

import math
import threading
import time
from collections import deque
from collections.abc import Iterable, Sequence
from concurrent.futures import Future
from typing import Any, NamedTuple

from . import errors
from .batch import Batch, Bunch
from .bpmap import BPMap, INSERT, SEARCH
from .cost import CostLedger
from .errors import InvariantViolation
from .fs1 import execute_slab, linearize, preliminary, run_section, separate
from .meter import Meter
from .ops import Call, GroupOperation, Kind, Operation, OpResult
from .segments import CAP, TARGET, Chains, Segment, move_inward, move_outward, segment_state
from .sync import DedicatedLock, ParallelBuffer, ReactivationWrapper, spawn

_LEVELS = 12


def pipeline_start(p: int) -> int:
    """Index of the first pipelined section: ceil(log2 log2 (5 p^2))."""
    return math.ceil(math.log2(math.log2(5 * max(p, 1) ** 2)))


class _Access(NamedTuple):
    kind: int
    key: Any
    value: Any = None


class SectionBuffer:
    """Pending group-ops of one section: per kind, a map key -> Bunch."""

    def __init__(self) -> None:
        self.maps = [BPMap() for _ in range(4)]
        self.op_count = 0

    def insert(self, groups: Sequence[GroupOperation], meter: Meter) -> None:
        """Add key-sorted group-ops (any mix of kinds), appending to the
        bunch already held for the same kind and key."""
        by_kind: list[list[GroupOperation]] = [[], [], [], []]
        for g in groups:
            by_kind[g.kind].append(g)
            self.op_count += g.size
        for a, gs in enumerate(by_kind):
            if not gs:
                continue
            m = self.maps[a]
            found = m.sorted_batch_access([_Access(SEARCH, g.key) for g in gs], meter)
            fresh = []
            for g, r in zip(gs, found):
                if r.found:
                    r.value.add(Batch([g]), meter)
                else:
                    u = Bunch()
                    u.add(Batch([g]), meter)
                    fresh.append(_Access(INSERT, g.key, u))
            if fresh:
                m.sorted_batch_access(fresh, meter)

    def flush(self, a: int, meter: Meter) -> list[GroupOperation]:
        """Remove every kind-``a`` entry; one merged group per key, key order."""
        m = self.maps[a]
        if not m:
            return []
        self.maps[a] = BPMap()
        out = []
        for _, u in m.items():
            g = GroupOperation.merged(list(u.to_batch(meter)))
            self.op_count -= g.size
            out.append(g)
        meter.charge(len(out))
        return out

    def __len__(self) -> int:
        return self.op_count


class Level:
    """Everything attached to one pipelined section index, whether or not
    the section currently has segments."""

    def __init__(self, k: int) -> None:
        self.k = k
        self.segs: list[Segment | None] = [None, None]
        self.buffer = SectionBuffer()
        self.deferred = False
        self.wrapper: ReactivationWrapper | None = None

    @property
    def exists(self) -> bool:
        return self.segs[0] is not None or self.segs[1] is not None


class FS2:
    def __init__(
        self,
        items: Iterable[tuple[Any, Any]] = (),
        p: int = 4,
        record: bool = True,
        log_activity: bool = False,
    ) -> None:
        self.p = max(1, p)
        self.m = pipeline_start(self.p)
        self.cut = self.p * self.p
        self.record = record
        self.ledger = CostLedger()
        self.first = Chains()
        self.levels = [Level(k) for k in range(self.m + _LEVELS + 1)]
        self.locks = {k: DedicatedLock(2, log=log_activity) for k in range(self.m, self.m + _LEVELS + 1)}
        self.first_deferred = False
        self.errors: list[BaseException] = []
        self.invariant_failures: list[str] = []
        self.linearization: list[Operation] = []
        self._log_lock = threading.Lock()
        self._feed: deque[Bunch] = deque([Bunch()])
        self._feed_size = 0
        self.first_wrapper = ReactivationWrapper(self._first_run, on_error=self._error, log=log_activity)
        for lv in self.levels[self.m :]:
            lv.wrapper = ReactivationWrapper(
                (lambda k=lv.k: self._section_run(k)), on_error=self._error, log=log_activity
            )
        self.buffer = ParallelBuffer(self.p, self.first_wrapper.reactivate)
        self.first_runs = 0
        self.deferrals = 0
        self.activity: list[tuple[int, int, int]] | None = [] if log_activity else None
        pairs = list(items)
        if pairs:
            rec = self.record
            self.record = False
            futs = [self.submit(Operation(Kind.INSERT, k, v)) for k, v in pairs]
            for f in futs:
                f.result()
            self.quiesce()
            self.record = rec
            self.ledger = CostLedger()

    # -- public surface ------------------------------------------------------

    def submit(self, op: Operation, slot: int | None = None) -> Future:
        fut: Future = Future()
        self.buffer.submit(Call(op, future=fut), slot)
        return fut

    def execute(self, ops: Sequence[Operation]) -> list[OpResult]:
        """Submit all of ``ops`` at once and wait for their results."""
        futs = [self.submit(op) for op in ops]
        return [f.result() for f in futs]

    def quiesce(self, timeout: float = 60.0) -> None:
        """Wait until no run is active or pending and every buffer is empty."""
        deadline = time.monotonic() + timeout
        calm = 0
        while calm < 3:
            if self._idle():
                calm += 1
            else:
                calm = 0
            if time.monotonic() > deadline:
                raise TimeoutError("pipeline did not drain")
            time.sleep(0.0005)
        if self.errors:
            raise self.errors[0]

    def _idle(self) -> bool:
        if not self.first_wrapper.idle or self.buffer.nonempty() or self._feed_size:
            return False
        for lv in self.levels[self.m :]:
            if not lv.wrapper.idle or lv.buffer.op_count:
                return False
        return True

    def __len__(self) -> int:
        return sum(len(s.map) for s in self._all_segments())

    def items(self) -> list[tuple[Any, Any]]:
        c0, c1 = self.chain(0), self.chain(1)
        out: list[tuple[Any, Any]] = []
        for s in c0:
            out.extend(s.map.items())
        for s in reversed(c1):
            out.extend(s.map.items())
        return out

    def chain(self, i: int) -> list[Segment]:
        out = list(self.first.chains[i])
        for lv in self.levels[self.m :]:
            s = lv.segs[i]
            if s is None:
                break
            out.append(s)
        return out

    def _all_segments(self) -> list[Segment]:
        return self.chain(0) + self.chain(1)

    def sizes(self) -> tuple[list[int], list[int]]:
        return [len(s.map) for s in self.chain(0)], [len(s.map) for s in self.chain(1)]

    def max_level(self) -> int:
        return max(len(self.chain(0)), len(self.chain(1))) - 1

    def _error(self, e: BaseException) -> None:
        self.errors.append(e)

    def _fail(self, msg: str) -> None:
        self.invariant_failures.append(msg)
        if errors.DEBUG:
            raise InvariantViolation(msg)

    # -- segment access across both slabs --------------------------------------

    def _seg(self, i: int, k: int) -> Segment | None:
        if k < self.m:
            ch = self.first.chains[i]
            return ch[k] if k < len(ch) else None
        return self.levels[k].segs[i]

    def _last_in_chain(self, i: int, k: int) -> bool:
        return self._seg(i, k + 1) is None

    def _exists(self, k: int) -> bool:
        return self.levels[k].exists

    # -- first slab ------------------------------------------------------------

    def _first_run(self) -> None:
        if not self.buffer.nonempty() and not self._feed_size:
            return
        m = self.m
        lock = self.locks[m]
        lock.acquire(0)
        opened = self._exists(m)
        self.first.tail_open = opened
        if opened:
            blocked = self.levels[m].buffer.op_count > CAP[m - 1] or any(
                self.first.state(i, m - 1) != 0 for i in (0, 1) if len(self.first.chains[i]) >= m
            )
            if blocked:
                self.first_deferred = True
                self.deferrals += 1
                lock.release()
                self.levels[m].wrapper.reactivate()
                return
            for i in (0, 1):
                s = self._seg(i, m - 1)
                if s is not None:
                    s.frozen = len(s.map)
        lock.release()

        self._cut(self.buffer.flush())
        batch = self._pop_cut()
        calls = list(batch)
        start = time.perf_counter_ns()
        try:
            res_groups, order = self._process_first(calls, opened)
        except BaseException as e:
            for c in calls:
                c.fail(e)
            self._unfreeze()
            raise
        if self.activity is not None:
            self.activity.append((m - 1, start, time.perf_counter_ns()))
        lock.acquire(0)
        self._unfreeze()
        self._export_overflow()
        if res_groups:
            lv = self.levels[m]
            if not lv.exists:
                lv.segs = [Segment(), Segment()]
            meter = Meter()
            lv.buffer.insert(res_groups, meter)
            self.ledger.record("buffer", meter, [c.op.id for g in res_groups for c in g.members])
            if lv.buffer.op_count > 2 * CAP[m - 1]:
                self._fail(f"buffer of S[{m}] holds {lv.buffer.op_count} ops")
            lv.wrapper.reactivate()
        self.first.tail_open = self._exists(m)
        if self.record and order:
            with self._log_lock:
                self.linearization.extend(order)
        self.first_runs += 1
        lock.release()
        self.first_wrapper.reactivate()

    def _unfreeze(self) -> None:
        for i in (0, 1):
            s = self._seg(i, self.m - 1)
            if s is not None:
                s.frozen = None

    def _cut(self, b: Batch) -> None:
        """Top up the last feed bunch to p*p calls, then append full chunks."""
        n = len(b)
        if not n:
            return
        self._feed_size += n
        last = self._feed[-1]
        room = self.cut - last.size
        head = min(room, n)
        if head:
            last.add(b[0:head])
        for lo in range(head, n, self.cut):
            u = Bunch()
            u.add(b[lo : min(n, lo + self.cut)])
            self._feed.append(u)

    def _pop_cut(self) -> Batch:
        u = self._feed.popleft()
        if not self._feed:
            self._feed.append(Bunch())
        self._feed_size -= u.size
        return u.to_batch()

    def _process_first(self, calls: list[Call], opened: bool) -> tuple[list[GroupOperation], list[Operation]]:
        """The batched phases on the first slab only.  Returns the group-ops
        that belong deeper and the linearization of what was completed."""
        if not calls:
            return [], []
        segs = self.first
        m = self.m
        segs.touched = -1
        _, residual = preliminary(segs, calls, m, self.ledger)
        if residual and not opened:
            raise InvariantViolation("calls left over with no pipelined section")
        ineffectual, eff_groups, res_groups = separate(calls, residual, self.ledger)
        first_exec = execute_slab(segs, eff_groups, 0, m, self.ledger)
        meter = Meter()
        check = errors.DEBUG
        if opened:

            def skipped(k: int) -> bool:
                return k > first_exec

            meter.fork(
                lambda: segs.sweep(0, meter, skipped, (), stop=m, check=check),
                lambda: segs.sweep(1, meter, skipped, (), stop=m, check=check),
            )
        else:
            meter.fork(lambda: segs.sweep(0, meter, check=check), lambda: segs.sweep(1, meter, check=check))
            segs.rebalance_chains(meter, cap=2)
        self.ledger.record("rebalance", meter)
        order = linearize(ineffectual, eff_groups) if self.record else []
        return res_groups, order

    def _export_overflow(self) -> None:
        """Hand first-slab levels >= m (grown while it was the whole
        structure) over to the pipelined sections."""
        m = self.m
        for i in (0, 1):
            ch = self.first.chains[i]
            for k in range(m, len(ch)):
                self.levels[k].segs[i] = ch[k]
            del ch[m:]

    # -- pipelined sections ----------------------------------------------------

    def lock_order(self, k: int) -> list[tuple[int, int]]:
        """(lock index, key) pairs in the order S[k] acquires them.  Lock
        ``j`` sits between S[j-1] (key 0) and S[j] (key 1); locks are
        labelled 1 and 2 alternately from ``m`` and label 1 goes first."""
        lower, upper = (k, 1), (k + 1, 0)
        return [lower, upper] if (k - self.m) % 2 == 0 else [upper, lower]

    def _section_run(self, k: int) -> None:
        m = self.m
        lv = self.levels[k]
        order = self.lock_order(k)
        for j, key in order:
            self.locks[j].acquire(key)
        low, high = self.locks[k], self.locks[k + 1]
        start = time.perf_counter_ns()
        wake_next = False
        try:
            if lv.exists or lv.buffer.op_count:
                if not lv.exists:
                    lv.segs = [Segment(), Segment()]
                proceeded, wake_next = self._section_body(k)
                if not proceeded:
                    return
            if k == m:
                if self.first_deferred:
                    self.first_deferred = False
                    self.first_wrapper.reactivate()
            else:
                prev = self.levels[k - 1]
                if prev.deferred:
                    prev.deferred = False
                    prev.wrapper.reactivate()
        finally:
            if self.activity is not None:
                self.activity.append((k, start, time.perf_counter_ns()))
            high.release()
            low.release()
            if wake_next:
                self.levels[k + 1].wrapper.reactivate()

    def _imbalanced(self, k: int) -> bool:
        for i in (0, 1):
            s = self._seg(i, k)
            if s is not None and segment_state(len(s.map), k, self._last_in_chain(i, k)) != 0:
                return True
        return False

    def _section_body(self, k: int) -> tuple[bool, bool]:
        """Steps of one proceeding run; returns (proceeded, wake successor)."""
        lv = self.levels[k]
        nxt = self.levels[k + 1]
        if self._imbalanced(k) or (nxt.exists and nxt.buffer.op_count > CAP[k]):
            lv.deferred = True
            self.deferrals += 1
            return False, True
        last = not nxt.exists
        maps = tuple(s.map if s is not None else None for s in lv.segs)
        deliveries: list[tuple[GroupOperation, bool, Any]] = []

        def deliver(g: GroupOperation, found: bool, prior: Any) -> None:
            deliveries.append((g, found, prior))

        applied: list[Operation] = []
        forwarded = False
        for a in range(4):
            meter = Meter()
            groups = lv.buffer.flush(a, meter)
            self.ledger.record("buffer", meter, [c.op.id for g in groups for c in g.members])
            if not groups:
                continue
            pending = [Batch(), Batch(), Batch(), Batch()]
            pending[a] = Batch(groups)
            applied.extend(run_section(maps, last, pending, self.ledger, "final", deliver))
            rest = pending[a]
            if len(rest):
                if last:
                    raise InvariantViolation(f"last section S[{k}] left {len(rest)} group-ops over")
                meter = Meter()
                nxt.buffer.insert(list(rest), meter)
                self.ledger.record("buffer", meter, [c.op.id for g in rest for c in g.members])
                forwarded = True
        if deliveries:
            spawn(lambda: _fan_out_all(deliveries))
        if nxt.buffer.op_count > 2 * CAP[k]:
            self._fail(f"buffer of S[{k + 1}] holds {nxt.buffer.op_count} ops")
        meter = Meter()
        created = self._local_rebalance(k, meter)
        self.ledger.record("rebalance", meter)
        if self.record and applied:
            with self._log_lock:
                self.linearization.extend(applied)
        self._check_after_run(k, created)
        return True, forwarded or created

    def _local_rebalance(self, k: int, meter: Meter) -> bool:
        """Fix S[k-1] against S[k], grow past an overfull last segment and
        equalize chain lengths at the last section.  Returns whether a
        segment of S[k+1] was created."""
        lv = self.levels[k]
        created = False
        for i in (0, 1):
            seg = lv.segs[i]
            if seg is None:
                continue
            prev = self._seg(i, k - 1)
            vis = prev.visible_size()
            st = segment_state(vis, k - 1, False)
            if st > 0:
                move_inward(i, prev, seg, len(prev.map) - TARGET[k - 1], meter)
            elif st < 0:
                q = min(TARGET[k - 1] - len(prev.map), len(seg.map))
                move_outward(i, prev, seg, q, meter)
                if not seg.map and self._last_in_chain(i, k):
                    lv.segs[i] = None
                    seg = None
            if st != 0 and seg is not None and len(prev.map) != TARGET[k - 1]:
                self._fail(f"S{i}[{k - 1}] left at {len(prev.map)} after rebalancing from S[{k}]")
            if seg is not None and self._last_in_chain(i, k) and segment_state(len(seg.map), k, True) > 0:
                self.levels[k + 1].segs[i] = Segment()
                created = True
        if not self._exists(k + 1):
            s0, s1 = lv.segs
            if (s0 is None) != (s1 is None):
                i = 0 if s0 is not None else 1
                j = 1 - i
                src = lv.segs[i]
                dst = Segment(src.map)
                src.map = BPMap()
                meter.charge(1)
                lv.segs[j] = dst
                prev = self._seg(j, k - 1)
                if segment_state(prev.visible_size(), k - 1, False) < 0:
                    q = min(TARGET[k - 1] - len(prev.map), len(dst.map))
                    move_outward(j, prev, dst, q, meter)
                if not dst.map:
                    lv.segs = [None, None]
        return created

    def _check_after_run(self, k: int, created: bool) -> None:
        if not errors.DEBUG:
            return
        lv = self.levels[k]
        if lv.exists and not created and not self._exists(k + 1):
            if (lv.segs[0] is None) != (lv.segs[1] is None):
                self._fail(f"chains end at different levels after last section S[{k}] ran")
            if self._imbalanced(k):
                self._fail(f"last section S[{k}] imbalanced after its run")
        for i in (0, 1):
            s = lv.segs[i]
            if s is None:
                continue
            n = len(s.map)
            if n > 2 * TARGET[k]:
                self._fail(f"S{i}[{k}] holds {n} > 2 t({k})")

    # -- invariant scans -------------------------------------------------------

    def violations(self) -> list[str]:
        """Invariant breaches visible now; meant for quiescent moments."""
        out: list[str] = []
        m = self.m
        c0, c1 = self.chain(0), self.chain(1)
        if len(c0) != len(c1):
            out.append(f"chain lengths differ: {len(c0)} vs {len(c1)}")
        top = max(len(c0), len(c1)) - 1
        for i, ch in enumerate((c0, c1)):
            for k, s in enumerate(ch):
                n = len(s.map)
                last_seg = k == len(ch) - 1
                if k < m - 1 and segment_state(n, k, last_seg) != 0:
                    out.append(f"first slab S{i}[{k}] imbalanced: {n}")
                elif k == m - 1 and n > 2 * TARGET[k]:
                    out.append(f"S{i}[{k}] holds {n} > 2 t({k})")
                elif k >= m:
                    if n > 2 * TARGET[k]:
                        out.append(f"S{i}[{k}] holds {n} > 2 t({k})")
                    if k < top and n < CAP[k - 1]:
                        out.append(f"S{i}[{k}] holds {n} < c({k - 1})")
        for lv in self.levels[m:]:
            if lv.buffer.op_count > 2 * CAP[lv.k - 1]:
                out.append(f"buffer of S[{lv.k}] holds {lv.buffer.op_count}")
        prev = None
        for key, _ in self.items():
            if prev is not None and not prev[0] < key:
                out.append(f"key order broken at {key!r}")
                break
            prev = (key,)
        out.extend(self.invariant_failures)
        return out


def _fan_out_all(deliveries: list[tuple[GroupOperation, bool, Any]]) -> None:
    for g, found, prior in deliveries:
        g.fan_out(found, prior)


def fs2_submit(s: FS2, op: Operation) -> Future:
    return s.submit(op)
