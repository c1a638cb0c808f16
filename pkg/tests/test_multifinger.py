import random

import pytest

from parfinger.cost import FingerOracle, verify_linearization
from parfinger.fs1 import FS1
from parfinger.multifinger import FingerMove, MoveOutcome, MultiFingerFS, as_cut, mf_move_finger, mf_process_batch
from parfinger.ops import NEG_INF, POS_INF, Kind, Operation, OpResult


def pairs(keys):
    return [(k, k) for k in keys]


def test_no_fingers_behaves_like_single_structure():
    rng = random.Random(2)
    a = MultiFingerFS(pairs(range(0, 500, 3)))
    b = FS1(pairs(range(0, 500, 3)))
    for _ in range(30):
        ops = [Operation(Kind(rng.randrange(4)), rng.randrange(500), rng.random()) for _ in range(40)]
        assert a.process_batch(ops) == b.process_batch(ops)
    assert a.items() == b.items()
    assert a.sectors[0].segments.sizes() == b.segments.sizes()


def test_routing_by_finger():
    s = MultiFingerFS(pairs(range(100)), fingers=[30, (60, True)])
    assert [len(x) for x in s.sectors] == [30, 31, 39]
    assert s.sector_of(29) == 0 and s.sector_of(30) == 1
    assert s.sector_of(60) == 1 and s.sector_of(61) == 2
    assert not s.violations()


def test_last_move_of_a_finger_wins():
    s = MultiFingerFS(pairs(range(100)), fingers=[50])
    out = s.process_batch([FingerMove(0, as_cut(10)), FingerMove(0, as_cut(70))])
    assert out[0] == out[1] == MoveOutcome(True, 20)
    assert s.fingers == [(70, False)]
    assert [len(x) for x in s.sectors] == [70, 30]


def test_sector_isolation_against_oracle():
    rng = random.Random(4)
    s = MultiFingerFS(pairs(range(0, 3000, 2)), fingers=[1000, 2000])
    oracle = FingerOracle(pairs(range(0, 3000, 2)))
    oracle.set_fingers(list(s.fingers))
    results = {}
    for _ in range(60):
        batch = [Operation(Kind(rng.randrange(4)), rng.randrange(3000), rng.random()) for _ in range(50)]
        if rng.random() < 0.3:
            j = rng.randrange(2)
            lo = s.fingers[j - 1][0] if j == 1 else 0
            hi = s.fingers[1][0] if j == 0 else 3000
            batch.append(FingerMove(j, as_cut(rng.randrange(lo, hi + 1))))
        for x, r in zip(batch, s.process_batch(batch)):
            if isinstance(x, Operation):
                results[x.id] = r
            else:
                assert r.accepted
        assert not s.violations()
    assert verify_linearization(results, s.linearization, oracle=oracle)


def test_zero_distance_move_changes_nothing():
    s = MultiFingerFS(pairs(range(200)), fingers=[100])
    before = [x.segments.sizes() for x in s.sectors]
    assert s.move_finger(0, 100) == 0
    assert [x.segments.sizes() for x in s.sectors] == before


def test_move_across_one_item_between_keys():
    s = MultiFingerFS(pairs(range(50)), fingers=[(20, False)])
    assert s.move_finger(0, (20, True)) == 1
    assert 20 in dict(s.sectors[0].items())
    assert s.move_finger(0, (20, False)) == 1
    assert 20 in dict(s.sectors[1].items())
    assert not s.violations()


def test_crossing_a_neighbour_is_rejected():
    s = MultiFingerFS(pairs(range(100)), fingers=[30, 60])
    with pytest.raises(ValueError):
        s.move_finger(0, 70)
    with pytest.raises(ValueError):
        mf_move_finger(s, 1, 10)
    out = mf_process_batch(s, [FingerMove(1, as_cut(5)), Operation(Kind.SEARCH, 65)])
    assert out == [MoveOutcome(False), OpResult(True, 65)]
    assert s.fingers == [(30, False), (60, False)]


def test_unknown_finger_index():
    s = MultiFingerFS(pairs(range(10)), fingers=[5])
    with pytest.raises(IndexError):
        s.move_finger(1, 3)
    with pytest.raises(IndexError):
        s.process_batch([FingerMove(3, NEG_INF)])


def test_far_moves_to_either_end():
    s = MultiFingerFS(pairs(range(2000)), fingers=[1000])
    assert s.move_finger(0, POS_INF) == 1000
    assert len(s.sectors[1]) == 0 and len(s.sectors[0]) == 2000
    assert not s.violations()
    assert s.move_finger(0, NEG_INF) == 2000
    assert len(s.sectors[0]) == 0
    assert [k for k, _ in s.items()] == list(range(2000))
    assert not s.violations()


def test_fingers_must_start_sorted():
    with pytest.raises(ValueError):
        MultiFingerFS(fingers=[10, 5])


@pytest.mark.parametrize("seed", range(4))
def test_random_moves_keep_sectors_balanced(seed):
    rng = random.Random(seed)
    s = MultiFingerFS(pairs(range(5000)), fingers=[1250, 2500, 3750])
    for _ in range(80):
        j = rng.randrange(3)
        lo = s.fingers[j - 1] if j else NEG_INF
        hi = s.fingers[j + 1] if j < 2 else POS_INF
        target = rng.choice([lo, hi, as_cut(rng.randrange(5000)), (rng.randrange(5000), True)])
        try:
            s.move_finger(j, target)
        except ValueError:
            continue
        assert not s.violations()
    assert [k for k, _ in s.items()] == list(range(5000))
