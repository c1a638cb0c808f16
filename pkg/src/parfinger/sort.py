"""Parallel merge sort and duplicate-combining (entropy) sort.

``pesort`` merges like ``pmsort`` but fuses equal keys into a :class:`Bundle`
whenever they meet, so each merge level only pays for distinct keys.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from collections import Counter
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass
from typing import Any

from .batch import Batch, _wrap
from .errors import ContractViolation
from .meter import NULL_METER, Meter, ceil_log2


def _identity(x):
    return x


class Bundle:
    """Binary tree whose leaves are items sharing one sort key, in input order."""

    __slots__ = ("left", "right", "item", "size", "height")

    def __init__(self, item: Any, left: "Bundle | None" = None, right: "Bundle | None" = None) -> None:
        self.item = item
        self.left = left
        self.right = right
        if left is None:
            self.size = 1
            self.height = 0
        else:
            self.size = left.size + right.size
            self.height = 1 + max(left.height, right.height)

    @staticmethod
    def combine(a: "Bundle", b: "Bundle") -> "Bundle":
        return Bundle(a.item, a, b)

    def leaves(self) -> Iterator[Any]:
        stack = [self]
        while stack:
            node = stack.pop()
            if node.left is None:
                yield node.item
            else:
                stack.append(node.right)
                stack.append(node.left)

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"Bundle({self.item!r}, size={self.size}, height={self.height})"


@dataclass
class SortStats:
    comparisons: int = 0
    entropy_budget: float = 0.0


def entropy(frequencies: Iterable[int]) -> float:
    """H = sum of q * log2(n / q) over the key frequencies q."""
    qs = [q for q in frequencies if q > 0]
    n = sum(qs)
    return sum(q * math.log2(n / q) for q in qs)


def _merge_lists(la: list, lb: list, keyf, meter: Meter) -> list:
    out = []
    i = j = 0
    na, nb = len(la), len(lb)
    while i < na and j < nb:
        if keyf(lb[j]) < keyf(la[i]):
            out.append(lb[j])
            j += 1
        else:
            out.append(la[i])
            i += 1
    meter.cmp += i + j
    meter.work += na + nb + i + j
    if i < na:
        out.extend(la[i:])
    elif j < nb:
        out.extend(lb[j:])
    return out


def _pmsort(items: list, lo: int, hi: int, keyf, meter: Meter) -> list:
    n = hi - lo
    if n <= 1:
        meter.work += 1
        return items[lo:hi]
    mid = (lo + hi) // 2
    base = meter.span
    a = _pmsort(items, lo, mid, keyf, meter)
    sa = meter.span - base
    meter.span = base
    b = _pmsort(items, mid, hi, keyf, meter)
    meter.span = base + max(sa, meter.span - base) + ceil_log2(n) ** 2 + 1
    return _merge_lists(a, b, keyf, meter)


def pmsort(b: Batch | Iterable[Any], key: Callable[[Any], Any] | None = None, meter: Meter = NULL_METER) -> Batch:
    """Stable parallel merge sort."""
    items = b.to_list() if isinstance(b, Batch) else list(b)
    return _wrap(_pmsort(items, 0, len(items), key or _identity, meter))


def _merge_bundles(la: list, lb: list, keyf, meter: Meter) -> list:
    out = []
    i = j = 0
    na, nb = len(la), len(lb)
    comps = 0
    while i < na and j < nb:
        x, y = la[i], lb[j]
        kx, ky = keyf(x.item), keyf(y.item)
        comps += 1
        if kx < ky:
            out.append(x)
            i += 1
        elif ky < kx:
            comps += 1
            out.append(y)
            j += 1
        else:
            comps += 1
            out.append(Bundle(x.item, x, y))
            i += 1
            j += 1
    meter.cmp += comps
    meter.work += comps + na + nb
    if i < na:
        out.extend(la[i:])
    elif j < nb:
        out.extend(lb[j:])
    return out


def _pesort(leaves: list, lo: int, hi: int, keyf, meter: Meter) -> list:
    n = hi - lo
    if n <= 1:
        meter.work += 1
        return leaves[lo:hi]
    mid = (lo + hi) // 2
    base = meter.span
    a = _pesort(leaves, lo, mid, keyf, meter)
    sa = meter.span - base
    meter.span = base
    b = _pesort(leaves, mid, hi, keyf, meter)
    meter.span = base + max(sa, meter.span - base) + ceil_log2(n) ** 2 + 1
    return _merge_bundles(a, b, keyf, meter)


def pesort(
    b: Batch | Iterable[Any],
    key: Callable[[Any], Any] | None = None,
    meter: Meter = NULL_METER,
    stats: SortStats | None = None,
) -> Batch:
    """Sort into one :class:`Bundle` per distinct key, in key order.

    Leaves of each bundle keep the left-to-right order of the input.
    """
    items = b.to_list() if isinstance(b, Batch) else list(b)
    keyf = key or _identity
    before = meter.cmp
    out = _pesort([Bundle(x) for x in items], 0, len(items), keyf, meter)
    if stats is not None:
        stats.comparisons += meter.cmp - before
        stats.entropy_budget += entropy(g.size for g in out)
    return _wrap(out)


def bundle_balance(g: Bundle | None, meter: Meter = NULL_METER) -> Batch:
    """Flatten a bundle into a batch of its leaves in leaf order.

    The leaves are cut into chunks of ``h = height + 1`` by rank; each chunk
    starts at the leaf of rank ``i*h + 1`` and is gathered by a walk from
    that leaf, so the chunks could be collected independently.
    """
    if g is None or g.size == 0:
        raise ContractViolation("bundle_balance needs a nonempty bundle")
    h = g.height + 1
    out: list = []
    touched = 0
    starts = range(0, g.size, h)
    for start in starts:
        touched += g.height + 1
        out.extend(_leaves_from_rank(g, start, min(h, g.size - start)))
    chunk_span = 2 * g.height + 1
    meter.charge(touched + g.size, chunk_span + ceil_log2(len(starts)) + 1)
    return _wrap(out)


def _leaves_from_rank(g: Bundle, start: int, count: int) -> list:
    """Return ``count`` leaves starting at 0-based rank ``start``."""
    out: list = []
    stack: list[Bundle] = []
    node = g
    r = start
    while node.left is not None:
        if r < node.left.size:
            stack.append(node.right)
            node = node.left
        else:
            r -= node.left.size
            node = node.right
    out.append(node.item)
    while len(out) < count and stack:
        node = stack.pop()
        while node.left is not None:
            stack.append(node.right)
            node = node.left
        out.append(node.item)
    return out


def marked_node_count(n: int, marked: Iterable[int]) -> int:
    """Nodes of a balanced n-leaf tree lying on a root path to a marked leaf.

    The tree splits a range of ``s`` leaves into ``ceil(s/2)`` and
    ``floor(s/2)``.  ``marked`` are 0-based leaf ranks.
    """
    ranks = sorted(set(marked))
    if ranks and not (0 <= ranks[0] and ranks[-1] < n):
        raise ContractViolation("marked leaf rank out of range")
    total = 0
    stack = [(0, n)]
    while stack:
        lo, hi = stack.pop()
        a = bisect_left(ranks, lo)
        if a == len(ranks) or ranks[a] >= hi:
            continue
        total += 1
        if hi - lo > 1:
            mid = lo + (hi - lo + 1) // 2
            stack.append((lo, mid))
            stack.append((mid, hi))
    return total


def key_frequencies(items: Iterable[Any], key: Callable[[Any], Any] | None = None) -> Counter:
    keyf = key or _identity
    return Counter(keyf(x) for x in items)
