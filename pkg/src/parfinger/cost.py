"""Work ledger, finger-bound oracle and linearization replay."""

from __future__ import annotations

import math
import threading
from bisect import bisect_left, insort
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Any

from .meter import Meter
from .ops import ABSENT, NEG_INF, POS_INF, Kind, Operation, OpResult


class CostLedger:
    """Thread-safe accumulation of meters by phase.

    Work recorded with ``op_ids`` is split evenly over those operations; work
    recorded without them (rebalancing) stays unattributed.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.phases: Counter = Counter()
        self.per_op_charge: dict[int, float] = {}
        self.comparisons = 0
        self.rebalance_work = 0
        self.span = 0

    def record(self, phase: str, meter: Meter, op_ids: Iterable[int] | None = None) -> None:
        if op_ids is None and not (meter.work or meter.span or meter.cmp):
            return
        with self._lock:
            self.phases[phase] += meter.work
            self.comparisons += meter.cmp
            self.span += meter.span
            if op_ids is None:
                self.rebalance_work += meter.work
                return
            ids = list(op_ids)
            if not ids:
                self.rebalance_work += meter.work
                return
            share = meter.work / len(ids)
            charge = self.per_op_charge
            for i in ids:
                charge[i] = charge.get(i, 0.0) + share

    @property
    def total_work(self) -> int:
        return sum(self.phases.values())

    def attributed_work(self) -> float:
        return sum(self.per_op_charge.values())

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            return {
                "total_work": self.total_work,
                "comparisons": self.comparisons,
                "rebalance_work": self.rebalance_work,
                "span": self.span,
                "phases": dict(self.phases),
            }


def finger_charge(r: int) -> float:
    return math.log2(r) + 1.0


class FingerOracle:
    """Sequential reference map that also sums the finger bound.

    Fingers sit at both ends.  Movable fingers (for the multi-finger
    structure) are cuts given as ``(key, after)``: the finger lies just after
    ``key`` when ``after`` is true, just before it otherwise.
    """

    def __init__(self, items: Iterable[tuple[Any, Any]] = ()) -> None:
        self.values: dict = dict(items)
        self.keys: list = sorted(self.values)
        self.f_total = 0.0
        self.n_ops = 0
        self.cuts: list[int] = []
        self._cut_specs: list[tuple[Any, bool]] = []

    def __len__(self) -> int:
        return len(self.keys)

    def distance(self, key) -> int:
        keys = self.keys
        n = len(keys)
        pos = bisect_left(keys, key)
        present = pos < n and keys[pos] == key
        if present:
            r = min(pos + 1, n - pos)
        else:
            r = min(pos + 1, n - pos + 1)
        if not self._cut_specs:
            return max(r, 1)
        for cut in self._cut_positions():
            if present:
                d = pos - cut + 1 if pos >= cut else cut - pos
            else:
                d = pos - cut + 1 if pos >= cut else cut - pos + 1
            if d < r:
                r = d
        return max(r, 1)

    def _cut_positions(self) -> list[int]:
        out = []
        for spec in self._cut_specs:
            if spec == NEG_INF:
                out.append(0)
                continue
            if spec == POS_INF:
                out.append(len(self.keys))
                continue
            key, after = spec
            pos = bisect_left(self.keys, key)
            if after and pos < len(self.keys) and self.keys[pos] == key:
                pos += 1
            out.append(pos)
        return out

    def set_fingers(self, cuts: Iterable[tuple[Any, bool]]) -> None:
        self._cut_specs = list(cuts)

    def move_finger(self, index: int, cut: tuple[Any, bool]) -> int:
        """Move a movable finger; charge and return the distance travelled."""
        old = self._cut_positions()[index]
        self._cut_specs[index] = cut
        new = self._cut_positions()[index]
        r = abs(new - old) + 1
        self.f_total += finger_charge(r)
        self.n_ops += 1
        return r

    def apply(self, op: Operation) -> tuple[OpResult, int]:
        r = self.distance(op.key)
        self.f_total += math.log2(r) + 1.0
        self.n_ops += 1
        return self.execute(op), r

    def execute(self, op: Operation) -> OpResult:
        """Apply without charging."""
        key = op.key
        values = self.values
        present = key in values
        prior = OpResult(True, values[key]) if present else ABSENT
        kind = op.kind
        if kind == Kind.UPDATE:
            if present:
                values[key] = op.value
        elif kind == Kind.INSERT:
            if not present:
                insort(self.keys, key)
            values[key] = op.value
        elif kind == Kind.DELETE:
            if present:
                del values[key]
                pos = bisect_left(self.keys, key)
                del self.keys[pos]
        return prior

    def contents(self) -> list[tuple[Any, Any]]:
        return [(k, self.values[k]) for k in self.keys]


def oracle_apply(o: FingerOracle, op: Operation) -> tuple[OpResult, int]:
    return o.apply(op)


@dataclass
class Verdict:
    ok: bool
    checked: int
    f_total: float
    mismatch_id: int | None = None
    expected: OpResult | None = None
    got: OpResult | None = None
    missing: int = 0

    def __bool__(self) -> bool:
        return self.ok


def verify_linearization(
    results: Mapping[int, OpResult],
    order: Iterable[Operation],
    initial: Iterable[tuple[Any, Any]] = (),
    oracle: FingerOracle | None = None,
) -> Verdict:
    """Replay ``order`` on a reference map and compare with recorded results.

    Fails at the first operation whose recorded result differs (or is
    missing).  Also fails if ``results`` holds ids absent from ``order``.
    Entries carrying ``finger`` and ``cut`` move the oracle's fingers.
    """
    o = oracle if oracle is not None else FingerOracle(initial)
    seen = 0
    for op in order:
        if hasattr(op, "finger"):
            o.move_finger(op.finger, op.cut)
            continue
        expected, _ = o.apply(op)
        got = results.get(op.id)
        seen += 1
        if got != expected:
            return Verdict(False, seen, o.f_total, op.id, expected, got)
    missing = len(results) - seen
    return Verdict(missing == 0, seen, o.f_total, missing=max(missing, 0))
