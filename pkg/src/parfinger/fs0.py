"""Sequential amortized finger structure.

Each operation scans sections from the smallest up until its key fits,
applies itself to that one segment, then repairs balance on the way out.
"""

from __future__ import annotations

from typing import Any

from .cost import CostLedger
from .meter import Meter
from .ops import Operation, OpResult
from .segments import Chains


class FS0:
    def __init__(self, items: Any = ()) -> None:
        self.segments = Chains()
        self.ledger = CostLedger()
        for k, v in items:
            self.execute(Operation(2, k, v))
        self.ledger = CostLedger()

    def __len__(self) -> int:
        return self.segments.total()

    def execute(self, op: Operation) -> OpResult:
        segs = self.segments
        m = Meter()
        side, level = segs.locate(op.key, m)
        segs._touch(level)
        res = segs.chains[side][level].map.access(int(op.kind), op.key, op.value, m)
        self.ledger.record("execute", m, (op.id,))
        r = Meter()
        self.rebalance_segment(side, level, r)
        self.rebalance_chains(r)
        self.ledger.record("rebalance", r)
        return OpResult(res.found, res.value) if res.found else OpResult(False)

    def rebalance_segment(self, side: int, level: int, meter: Meter | None = None) -> None:
        """Bring S_side[level] back to its target, cascading upward.

        A balanced segment is left alone.
        """
        self.segments.cascade(side, level, meter or Meter())

    def rebalance_chains(self, meter: Meter | None = None) -> None:
        self.segments.balance_chain_lengths(meter or Meter())

    def items(self) -> list[tuple[Any, Any]]:
        return self.segments.items()

    def violations(self, deep: bool = False) -> list[str]:
        return self.segments.violations(deep)

    def max_level(self) -> int:
        return len(self.segments) - 1


def fs0_execute(s: FS0, op: Operation) -> OpResult:
    return s.execute(op)


def fs0_rebalance_segment(s: FS0, side: int, level: int) -> None:
    s.rebalance_segment(side, level)


def fs0_rebalance_chains(s: FS0) -> None:
    s.rebalance_chains()
