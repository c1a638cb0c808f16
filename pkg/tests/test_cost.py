import math
import random

import pytest

from parfinger.cost import CostLedger, FingerOracle, oracle_apply, verify_linearization
from parfinger.meter import Meter
from parfinger.ops import Kind, Operation, OpResult


def test_distance_smallest_and_median():
    o = FingerOracle((k, k) for k in range(15))
    res, r = oracle_apply(o, Operation(Kind.SEARCH, 0))
    assert res == OpResult(True, 0) and r == 1 and o.f_total == 1
    o = FingerOracle((k, k) for k in range(15))
    _, r = oracle_apply(o, Operation(Kind.SEARCH, 7))
    assert r == 8 and o.f_total == pytest.approx(4.0)


def test_absent_key_uses_insertion_rank():
    o = FingerOracle((k, None) for k in range(0, 20, 2))
    assert o.distance(-1) == 1
    assert o.distance(100) == 1
    assert o.distance(9) == min(5 + 1, 10 - 5 + 1)


def test_f_total_deterministic_and_order_sensitive():
    rng = random.Random(12)
    trace = [Operation(Kind(rng.randrange(4)), rng.randrange(500), i) for i in range(10**4)]

    def f(tr):
        o = FingerOracle()
        for op in tr:
            o.apply(op)
        return o.f_total

    assert f(trace) == f(trace)
    assert f(trace) != f(list(reversed(trace)))


def test_reference_semantics():
    o = FingerOracle()
    assert o.execute(Operation(Kind.UPDATE, 1, "a")) == OpResult(False)
    assert o.execute(Operation(Kind.INSERT, 1, "a")) == OpResult(False)
    assert o.execute(Operation(Kind.INSERT, 1, "b")) == OpResult(True, "a")
    assert o.execute(Operation(Kind.UPDATE, 1, "c")) == OpResult(True, "b")
    assert o.execute(Operation(Kind.DELETE, 1)) == OpResult(True, "c")
    assert o.execute(Operation(Kind.DELETE, 1)) == OpResult(False)
    assert o.contents() == []


def test_verify_empty_and_sequential():
    assert verify_linearization({}, [])
    ops = [Operation(Kind.INSERT, 1, "x"), Operation(Kind.SEARCH, 1)]
    results = {ops[0].id: OpResult(False), ops[1].id: OpResult(True, "x")}
    v = verify_linearization(results, ops)
    assert v.ok and v.checked == 2


def test_verify_reports_first_divergence():
    ops = [Operation(Kind.INSERT, 1, "x"), Operation(Kind.SEARCH, 1), Operation(Kind.SEARCH, 2)]
    results = {ops[0].id: OpResult(False), ops[1].id: OpResult(False), ops[2].id: OpResult(True)}
    v = verify_linearization(results, ops)
    assert not v.ok and v.mismatch_id == ops[1].id


def test_verify_flags_unreplayed_results():
    op = Operation(Kind.SEARCH, 1)
    v = verify_linearization({op.id: OpResult(False), -5: OpResult(False)}, [op])
    assert not v.ok and v.missing == 1


def test_movable_finger_distance():
    o = FingerOracle((k, None) for k in range(100))
    o.set_fingers([(50, False)])
    assert o.distance(50) == 1
    assert o.distance(49) == 1
    assert o.distance(47) == 3
    assert o.move_finger(0, (60, False)) == 11


def test_ledger_totals():
    led = CostLedger()
    m = Meter()
    m.compare(6)
    led.record("execute", m, [1, 2, 3])
    r = Meter()
    r.charge(4)
    led.record("rebalance", r)
    assert led.total_work == 10
    assert led.attributed_work() + led.rebalance_work == pytest.approx(led.total_work)
    assert led.per_op_charge[2] == pytest.approx(2.0)
    assert led.comparisons == 6
