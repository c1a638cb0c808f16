import random
import threading
from concurrent.futures import Future

import pytest

from parfinger.batch import Batch
from parfinger.cost import verify_linearization
from parfinger.fs2 import FS2, SectionBuffer, fs2_submit, pipeline_start
from parfinger.meter import Meter
from parfinger.ops import Call, GroupOperation, Kind, Operation, OpResult
from parfinger.segments import CAP, TARGET, move_outward


def preload(n: int, p: int = 1, **kw) -> FS2:
    return FS2([(k, k) for k in range(n)], p=p, **kw)


def test_pipeline_start():
    assert [pipeline_start(p) for p in (1, 2, 4, 8)] == [2, 3, 3, 4]


def test_cut_of_three_full_batches_gives_three_bunches():
    s = FS2(p=2)
    calls = [Call(Operation(Kind.SEARCH, k)) for k in range(3 * s.cut)]
    s._cut(Batch(calls))
    full = [u for u in s._feed if u.size]
    assert len(full) >= 3
    assert all(u.size <= s.cut for u in s._feed)
    assert s._feed_size == 3 * s.cut
    # drain without running
    while s._feed_size:
        s._pop_cut()


def test_section_buffer_merges_same_key():
    buf = SectionBuffer()
    meter = Meter()
    a = GroupOperation([Call(Operation(Kind.INSERT, 3, "a"))])
    b = GroupOperation([Call(Operation(Kind.INSERT, 3, "b"))])
    d = GroupOperation([Call(Operation(Kind.DELETE, 3))])
    buf.insert([a, d], meter)
    buf.insert([b], meter)
    assert len(buf) == 3
    ins = buf.flush(Kind.INSERT, meter)
    assert len(ins) == 1 and ins[0].size == 2
    assert [c.op.value for c in ins[0].members] == ["a", "b"]
    assert len(buf) == 1
    assert buf.flush(Kind.SEARCH, meter) == []


def test_small_run_matches_oracle():
    s = FS2(p=2)
    rng = random.Random(0)
    results = {}
    for _ in range(20):
        ops = [Operation(Kind(rng.randrange(4)), rng.randrange(300), rng.random()) for _ in range(rng.choice([1, 5, 60]))]
        for op, r in zip(ops, s.execute(ops)):
            results[op.id] = r
    s.quiesce()
    assert not s.violations()
    assert verify_linearization(results, s.linearization)


def test_insert_then_delete_removes_everything():
    s = FS2(p=2)
    s.execute([Operation(Kind.INSERT, k, k) for k in range(3000)])
    s.quiesce()
    assert len(s) == 3000 and s.max_level() >= s.m
    assert not s.violations()
    s.execute([Operation(Kind.DELETE, k) for k in range(3000)])
    s.quiesce()
    assert len(s) == 0 and s.items() == []
    assert not s.violations()


@pytest.mark.parametrize("p", [1, 2, 4])
def test_concurrent_submitters_each_result_once(p):
    s = FS2(p=p)
    n_each = 1500
    futs: dict[int, Future] = {}
    lock = threading.Lock()

    def worker(w):
        rng = random.Random(w)
        mine = {}
        for _ in range(n_each):
            op = Operation(Kind(rng.randrange(4)), rng.randrange(2000), w)
            f = s.submit(op, w)
            mine[op.id] = f
        with lock:
            futs.update(mine)

    th = [threading.Thread(target=worker, args=(w,)) for w in range(p)]
    for x in th:
        x.start()
    for x in th:
        x.join()
    results = {i: f.result(timeout=60) for i, f in futs.items()}
    s.quiesce()
    assert len(results) == p * n_each
    assert not s.errors
    assert not s.violations()
    assert verify_linearization(results, s.linearization)


def test_first_slab_defers_on_full_buffer():
    s = preload(200, p=1)
    m = s.m
    assert s.levels[m].exists
    lo = len(s.first.chains[0][0].map) + len(s.first.chains[0][1].map)
    futs = []
    groups = []
    for k in range(lo, lo + CAP[m - 1] + 1):
        f: Future = Future()
        futs.append(f)
        groups.append(GroupOperation([Call(Operation(Kind.UPDATE, k, -k), future=f)]))
    s.levels[m].buffer.insert(groups, Meter())
    before = s.deferrals
    assert s.execute([Operation(Kind.SEARCH, 0)]) == [OpResult(True, 0)]
    s.quiesce()
    assert s.deferrals > before
    assert [f.result(timeout=10) for f in futs] == [OpResult(True, k) for k in range(lo, lo + CAP[m - 1] + 1)]
    assert dict(s.items())[lo] == -lo
    assert not s.violations()


def test_overfull_boundary_segment_is_cut_back_to_target():
    s = preload(400, p=1)
    m = s.m
    low, high = s.first.chains[1][m - 1], s.levels[m].segs[1]
    start = len(low.map)
    move_outward(1, low, high, 30, Meter())
    assert len(low.map) == start + 30 > TARGET[m - 1] + CAP[m - 1]
    s.levels[m].wrapper.reactivate()
    s.quiesce()
    assert len(low.map) == TARGET[m - 1]
    assert [k for k, _ in s.items()] == list(range(400))
    assert not s.violations()


def test_lock_order_alternates():
    s = FS2(p=1)
    m = s.m
    assert s.lock_order(m) == [(m, 1), (m + 1, 0)]
    assert s.lock_order(m + 1) == [(m + 2, 0), (m + 1, 1)]
    assert s.lock_order(m + 2) == [(m + 2, 1), (m + 3, 0)]


def test_adjacent_sections_never_run_together():
    s = preload(6000, p=1, log_activity=True)
    s.activity.clear()
    rng = random.Random(5)
    for _ in range(20):
        s.execute([Operation(Kind(rng.randrange(4)), rng.randrange(6000), 0) for _ in range(300)])
    s.quiesce()
    by_level: dict[int, list[tuple[int, int]]] = {}
    for k, a, b in s.activity:
        by_level.setdefault(k, []).append((a, b))
    assert len(by_level) >= 3
    for k in by_level:
        if k < s.m or k + 1 not in by_level:
            continue
        for a, b in by_level[k]:
            for c, d in by_level[k + 1]:
                assert b <= c or d <= a, f"S[{k}] and S[{k + 1}] overlapped"
    assert not s.violations()


def test_submit_helper_and_single_op():
    s = FS2(p=1)
    assert fs2_submit(s, Operation(Kind.INSERT, 9, "z")).result(timeout=10) == OpResult(False)
    assert fs2_submit(s, Operation(Kind.SEARCH, 9)).result(timeout=10) == OpResult(True, "z")
    s.quiesce()
    assert s.items() == [(9, "z")]
