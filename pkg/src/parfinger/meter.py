"""Work and span counters for the simulated binary-forking model.

Forked branches run one after another in this process. ``Meter.fork`` keeps
work additive and charges the span of the longest branch only.
"""

from __future__ import annotations

import math
from typing import Any, Callable


class Meter:
    __slots__ = ("work", "span", "cmp")

    def __init__(self) -> None:
        self.work = 0
        self.span = 0
        self.cmp = 0

    def charge(self, work: int, span: int | None = None) -> None:
        self.work += work
        self.span += work if span is None else span

    def compare(self, count: int = 1, span: int | None = None) -> None:
        """Record ``count`` key comparisons (they also count as work)."""
        self.cmp += count
        self.work += count
        self.span += count if span is None else span

    def fork(self, *branches: Callable[[], Any]) -> list[Any]:
        base = self.span
        longest = 0
        out = []
        for branch in branches:
            self.span = base
            out.append(branch())
            longest = max(longest, self.span - base)
        self.span = base + longest + 1
        return out

    def parallel_for(self, n: int, body_work: int = 1) -> None:
        """Charge a flat parallel loop of ``n`` constant-cost iterations."""
        if n <= 0:
            return
        self.work += n * body_work
        self.span += ceil_log2(n) + body_work

    def absorb(self, other: "Meter") -> None:
        self.work += other.work
        self.span += other.span
        self.cmp += other.cmp

    def __repr__(self) -> str:
        return f"Meter(work={self.work}, span={self.span}, cmp={self.cmp})"


def ceil_log2(n: int) -> int:
    return 0 if n <= 1 else (n - 1).bit_length()


def log2p(n: float) -> float:
    """log2 clamped below at 0 (so log2p(0) == log2p(1) == 0)."""
    return math.log2(n) if n > 1 else 0.0


# Scratch meter for callers that do not care about costs.  Several threads may
# bump it at once; nobody reads it, so the lost updates are harmless.
NULL_METER = Meter()
