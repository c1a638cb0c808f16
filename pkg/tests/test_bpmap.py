import math
import random
from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from parfinger.bpmap import (
    DELETE,
    INSERT,
    SEARCH,
    UPDATE,
    BPMap,
    join_maps,
    sorted_batch_access,
    split_at_rank,
    unsorted_batch_search,
)
from parfinger.errors import ContractViolation
from parfinger.meter import Meter

WORK_C = 2.0
SPAN_C = 12.0


def op(kind, key, value=None):
    return SimpleNamespace(kind=kind, key=key, value=value)


def reference_apply(ref: dict, o):
    present = o.key in ref
    prior = (present, ref.get(o.key))
    if o.kind == UPDATE and present:
        ref[o.key] = o.value
    elif o.kind == INSERT:
        ref[o.key] = o.value
    elif o.kind == DELETE and present:
        del ref[o.key]
    return prior


def test_unsorted_batch_search_examples():
    assert [r.found for r in unsorted_batch_search(BPMap(), [5])] == [False]
    m = BPMap([(2, "b"), (9, "i")])
    assert [r.found for r in unsorted_batch_search(m, [2, 2, 9])] == [True, True, True]


def test_unsorted_batch_search_oracle_and_work():
    rng = random.Random(8)
    ref = {k: k * 3 for k in rng.sample(range(10**5), 10**4)}
    m = BPMap(ref.items())
    qs = [rng.randrange(10**5) for _ in range(1000)]
    meter = Meter()
    res = unsorted_batch_search(m, qs, meter)
    assert [(r.found, r.value) for r in res] == [(q in ref, ref.get(q)) for q in qs]
    assert meter.work <= WORK_C * len(qs) * math.log2(len(ref) + 2)
    assert sorted(m.items()) == sorted(ref.items())


def test_sorted_batch_access_examples():
    m = BPMap()
    res = sorted_batch_access(m, [op(INSERT, k, k) for k in (1, 2, 3)])
    assert list(m) == [1, 2, 3] and not any(r.found for r in res)
    m = BPMap([(5, "v")])
    res = sorted_batch_access(m, [op(DELETE, 5)])
    assert len(m) == 0 and res[0].found and res[0].value == "v"


def test_sorted_batch_access_rejects_unsorted():
    with pytest.raises(ContractViolation):
        sorted_batch_access(BPMap(), [op(INSERT, 2), op(INSERT, 1)])
    with pytest.raises(ContractViolation):
        sorted_batch_access(BPMap(), [op(INSERT, 2), op(INSERT, 2)])


@pytest.mark.parametrize("kind", [SEARCH, UPDATE, INSERT, DELETE])
def test_sorted_batch_access_matches_sequential_oracle(kind):
    rng = random.Random(9 + kind)
    ref = {k: -k for k in rng.sample(range(-10**5, 10**5), 10**4)}
    m = BPMap(ref.items())
    keys = sorted(rng.sample(range(-10**5, 10**5), 1000))
    ops = [op(kind, k, k) for k in keys]
    meter = Meter()
    res = sorted_batch_access(m, ops, meter)
    expected = [reference_apply(ref, o) for o in ops]
    assert [(r.found, r.value) for r in res] == expected
    assert list(m.items()) == sorted(ref.items())
    m.check()
    n = len(ref)
    assert meter.work <= WORK_C * len(ops) * math.log2(n + 2) + 2 * math.log2(n + 2)
    assert meter.span <= SPAN_C * (math.log2(len(ops)) + math.log2(n + 2))


def test_insert_on_present_key_replaces_and_reports_present():
    m = BPMap([(1, "old")])
    res = sorted_batch_access(m, [op(INSERT, 1, "new")])
    assert res[0].found and res[0].value == "old"
    assert dict(m.items()) == {1: "new"}


def test_update_on_absent_key_is_noop():
    m = BPMap([(1, "a")])
    res = sorted_batch_access(m, [op(UPDATE, 2, "z")])
    assert not res[0].found and dict(m.items()) == {1: "a"}


def test_split_at_rank_examples():
    a, b = split_at_rank(BPMap([(1, 1), (2, 2), (3, 3)]), 1)
    assert list(a) == [1] and list(b) == [2, 3]
    a, b = split_at_rank(BPMap([(1, 1)]), 0)
    assert list(a) == [] and list(b) == [1]
    with pytest.raises(IndexError):
        split_at_rank(BPMap([(1, 1)]), 2)


def test_split_at_rank_large_and_work():
    rng = random.Random(10)
    keys = sorted(rng.sample(range(10**6), 10**4))
    m = BPMap((k, None) for k in keys)
    meter = Meter()
    a, b = split_at_rank(m, 2500, meter)
    assert list(a) == keys[:2500] and list(b) == keys[2500:]
    a.check()
    b.check()
    assert meter.work <= 8 * math.log2(10**4 + 2)


def test_join_maps_examples():
    j = join_maps(BPMap([(1, 1)]), BPMap([(2, 2)]))
    assert list(j) == [1, 2]
    m = BPMap([(4, 4), (5, 5)])
    assert list(join_maps(BPMap(), m)) == [4, 5]
    with pytest.raises(ContractViolation):
        join_maps(BPMap([(3, 3)]), BPMap([(2, 2)]))


def test_join_maps_work_logarithmic():
    lo = BPMap((k, None) for k in range(5000))
    hi = BPMap((k, None) for k in range(5000, 5003))
    meter = Meter()
    j = join_maps(lo, hi, meter)
    j.check()
    assert len(j) == 5003
    assert meter.work <= 8 * math.log2(5003 + 2)


def test_min_max_cache_tracks_mutation():
    m = BPMap((k, None) for k in range(10))
    assert (m.min_key(), m.max_key()) == (0, 9)
    sorted_batch_access(m, [op(DELETE, 0), op(DELETE, 9)])
    assert (m.min_key(), m.max_key()) == (1, 8)
    m.access(INSERT, -3, None)
    m.access(INSERT, 20, None)
    assert (m.min_key(), m.max_key()) == (-3, 20)


def test_work_ratio_flat_as_map_doubles():
    rng = random.Random(11)
    ratios = []
    for e in range(10, 17, 2):
        n = 2**e
        m = BPMap((k, None) for k in range(0, 2 * n, 2))
        keys = sorted(rng.sample(range(2 * n), 256))
        meter = Meter()
        sorted_batch_access(m, [op(INSERT, k) for k in keys], meter)
        ratios.append(meter.work / (256 * math.log2(n + 2)))
    assert max(ratios) / min(ratios) < 2.0


@given(st.lists(st.integers(-100, 100), unique=True), st.data())
def test_split_join_round_trip(keys, data):
    keys.sort()
    m = BPMap((k, k) for k in keys)
    r = data.draw(st.integers(0, len(keys)))
    a, b = m.split_at_rank(r)
    assert list(a) == keys[:r] and list(b) == keys[r:]
    j = BPMap.join_maps(a, b)
    j.check()
    assert list(j.items()) == [(k, k) for k in keys]


@given(
    st.lists(st.integers(0, 60), unique=True),
    st.lists(st.tuples(st.sampled_from([SEARCH, UPDATE, INSERT, DELETE]), st.integers(0, 60)), max_size=40),
)
def test_mixed_kind_batches_match_reference(initial, raw):
    ref = {k: 0 for k in initial}
    m = BPMap(ref.items())
    dedup = {}
    for kind, key in raw:
        dedup[key] = kind
    ops = [op(kind, key, key + 1) for key, kind in sorted(dedup.items())]
    res = sorted_batch_access(m, ops)
    assert [(r.found, r.value) for r in res] == [reference_apply(ref, o) for o in ops]
    m.check()
    assert list(m.items()) == sorted(ref.items())
