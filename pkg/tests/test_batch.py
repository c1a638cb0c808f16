import math
import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from parfinger.batch import (
    Batch,
    Bunch,
    bunch_add,
    bunch_to_batch,
    join,
    merge,
    partition_by_pivot,
    partition_sorted,
    split,
)
from parfinger.errors import ContractViolation
from parfinger.meter import Meter


def test_split_examples():
    assert split(Batch([1, 2, 3, 4]), 2) == ([1, 2], [3, 4])
    assert split(Batch([7]), 0) == ([], [7])


def test_split_range_error():
    with pytest.raises(IndexError):
        split(Batch([1, 2]), 3)
    with pytest.raises(IndexError):
        split(Batch([1, 2]), -1)


def test_split_work_is_logarithmic():
    m = Meter()
    a, b = split(Batch(range(1000)), 500, m)
    assert list(a) == list(range(500)) and list(b) == list(range(500, 1000))
    assert m.work <= 16 * math.log2(1000)


def test_partition_by_pivot():
    assert partition_by_pivot(Batch([3, 1, 4, 1, 5]), 3) == ([3, 1, 1], [4, 5])
    assert partition_by_pivot(Batch([]), 9) == ([], [])
    rng = random.Random(2)
    xs = [rng.randrange(10**6) for _ in range(10**4)]
    med = sorted(xs)[len(xs) // 2]
    lo, hi = partition_by_pivot(Batch(xs), med)
    assert list(lo) == [x for x in xs if x <= med]
    assert list(hi) == [x for x in xs if x > med]


def test_partition_sorted_examples():
    parts = partition_sorted(Batch(range(1, 11)), [3, 7])
    assert parts == [[1, 2, 3], [4, 5, 6, 7], [8, 9, 10]]
    b = Batch([1, 2])
    assert partition_sorted(b, []) == [b]


def test_partition_sorted_matches_binary_search_oracle():
    rng = random.Random(3)
    xs = sorted(rng.randrange(10**5) for _ in range(10**4))
    pivots = sorted(rng.randrange(10**5) for _ in range(16))
    parts = partition_sorted(Batch(xs), pivots)
    bounds = [-math.inf] + pivots + [math.inf]
    for j, part in enumerate(parts):
        assert list(part) == [x for x in xs if bounds[j] < x <= bounds[j + 1]]


def test_partition_sorted_strict_puts_boundary_up():
    assert partition_sorted(Batch([1, 2, 2, 3]), [2], strict=True) == [[1], [2, 2, 3]]


def test_partition_sorted_rejects_unsorted_in_debug():
    with pytest.raises(ContractViolation):
        partition_sorted(Batch([3, 1, 2]), [2])
    with pytest.raises(ContractViolation):
        partition_sorted(Batch([1, 2, 3]), [3, 1])


def test_join_examples():
    assert join([Batch([1]), Batch([2, 3]), Batch()]) == [1, 2, 3]
    assert join([]) == []


def test_join_depth_counter():
    m = Meter()
    out = join([Batch([i]) for i in range(1000)], m)
    assert list(out) == list(range(1000))
    assert m.span <= 4 * math.log2(1000)


def test_merge_examples():
    assert merge(Batch([1, 3]), Batch([2, 3])) == [1, 2, 3, 3]
    assert merge(Batch([1, 3]), Batch([2, 3]), combine=lambda a, b: a) == [1, 2, 3]


def test_merge_is_stable_left_first():
    a = Batch([(1, "a"), (2, "a")])
    b = Batch([(1, "b"), (2, "b")])
    out = merge(a, b, key=lambda x: x[0])
    assert list(out) == [(1, "a"), (1, "b"), (2, "a"), (2, "b")]


def test_merge_random_equals_sort():
    rng = random.Random(4)
    a = sorted(rng.randrange(10**5) for _ in range(10**4))
    b = sorted(rng.randrange(10**5) for _ in range(10**4))
    assert list(merge(Batch(a), Batch(b))) == sorted(a + b)


def test_bunch_examples():
    u = Bunch()
    bunch_add(u, Batch([1, 2]))
    assert u.size == 2
    bunch_add(u, Batch())
    assert u.size == 2
    assert list(bunch_to_batch(Bunch())) == []


def test_bunch_deterministic_order():
    def build():
        u = Bunch()
        bunch_add(u, Batch([1]))
        bunch_add(u, Batch([2, 3]))
        return list(bunch_to_batch(u))

    assert build() == build()
    assert sorted(build()) == [1, 2, 3]


def test_bunch_add_work_constant():
    u = Bunch()
    per_add = []
    for i in range(10**4 // 10):
        m = Meter()
        bunch_add(u, Batch(range(10 * i, 10 * i + 10)), m)
        per_add.append(m.work)
    assert u.size == 10**4
    assert max(per_add) == min(per_add) == 1
    assert Counter(bunch_to_batch(u)) == Counter(range(10**4))


@given(st.lists(st.integers()), st.data())
def test_split_join_round_trip(xs, data):
    pos = data.draw(st.integers(0, len(xs)))
    b = Batch(xs)
    left, right = split(b, pos)
    assert list(join([left, right])) == xs


@given(st.lists(st.integers(-50, 50)), st.lists(st.integers(-50, 50), max_size=6))
def test_partition_sorted_concatenates(xs, ps):
    xs.sort()
    ps.sort()
    parts = partition_sorted(Batch(xs), ps)
    assert len(parts) == len(ps) + 1
    assert [x for p in parts for x in p] == xs


@given(st.lists(st.integers(-20, 20)), st.lists(st.integers(-20, 20)))
def test_merge_multiset(a, b):
    out = merge(Batch(sorted(a)), Batch(sorted(b)))
    assert list(out) == sorted(a + b)
