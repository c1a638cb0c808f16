"""Immutable batches and bunches.

A :class:`Batch` is a read-only view ``base[lo:hi]`` over a shared list, so
splitting is constant time.  Joining and merging build new arrays and are
charged as parallel concatenation/merging would be.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from collections.abc import Callable, Iterable, Iterator, Sequence
from typing import Any

from . import errors
from .errors import ContractViolation
from .meter import NULL_METER, Meter, ceil_log2


class Batch(Sequence):
    __slots__ = ("_base", "_lo", "_hi")

    def __init__(self, items: Iterable[Any] = ()) -> None:
        self._base = list(items)
        self._lo = 0
        self._hi = len(self._base)

    @classmethod
    def _view(cls, base: list, lo: int, hi: int) -> "Batch":
        b = cls.__new__(cls)
        b._base = base
        b._lo = lo
        b._hi = hi
        return b

    def __len__(self) -> int:
        return self._hi - self._lo

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self.to_list()[i]
        n = self._hi - self._lo
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise IndexError("batch index out of range")
        return self._base[self._lo + i]

    def __iter__(self) -> Iterator[Any]:
        base = self._base
        if self._lo == 0 and self._hi == len(base):
            return iter(base)
        return map(base.__getitem__, range(self._lo, self._hi))

    def to_list(self) -> list:
        if self._lo == 0 and self._hi == len(self._base):
            return self._base
        return self._base[self._lo:self._hi]

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (Batch, list, tuple)):
            return len(self) == len(other) and all(a == b for a, b in zip(self, other))
        return NotImplemented

    def __repr__(self) -> str:
        return f"Batch({self.to_list()!r})"


EMPTY = Batch()


def _identity(x):
    return x


def split(b: Batch, pos: int, meter: Meter = NULL_METER) -> tuple[Batch, Batch]:
    """Split into the first ``pos`` items and the rest."""
    n = len(b)
    if not 0 <= pos <= n:
        raise IndexError(f"split position {pos} outside [0, {n}]")
    meter.charge(1)
    mid = b._lo + pos
    return Batch._view(b._base, b._lo, mid), Batch._view(b._base, mid, b._hi)


def join(parts: Iterable[Batch], meter: Meter = NULL_METER) -> Batch:
    """Concatenate batches in order."""
    parts = [p for p in parts]
    nonempty = [p for p in parts if len(p)]
    if len(nonempty) == 1:
        meter.charge(1)
        return nonempty[0]
    out: list = []
    for p in nonempty:
        out.extend(p)
    n = len(out)
    meter.charge(n + len(parts), 2 * ceil_log2(len(parts)) + ceil_log2(n) + 1)
    return Batch._wrap(out)


def _wrap(items: list) -> Batch:
    b = Batch.__new__(Batch)
    b._base = items
    b._lo = 0
    b._hi = len(items)
    return b


Batch._wrap = staticmethod(_wrap)


def partition_by_pivot(
    b: Batch, pivot: Any, key: Callable[[Any], Any] = _identity, meter: Meter = NULL_METER
) -> tuple[Batch, Batch]:
    """Stable split into items with key <= pivot and items with key > pivot."""
    low, high = [], []
    for x in b:
        (low if key(x) <= pivot else high).append(x)
    n = len(b)
    meter.compare(n, ceil_log2(n) + 1)
    return _wrap(low), _wrap(high)


def _check_sorted(keys: Sequence, what: str) -> None:
    for i in range(1, len(keys)):
        if keys[i] < keys[i - 1]:
            raise ContractViolation(f"{what} is not sorted at position {i}")


def partition_sorted(
    b: Batch,
    pivots: Sequence[Any],
    key: Callable[[Any], Any] = _identity,
    meter: Meter = NULL_METER,
    *,
    strict: bool = False,
) -> list[Batch]:
    """Cut a sorted batch at sorted pivots into ``len(pivots) + 1`` parts.

    Part ``j`` holds items whose key lies in ``(pivots[j-1], pivots[j]]``.
    With ``strict=True`` the intervals are half-open the other way,
    ``[pivots[j-1], pivots[j])``, so an item equal to a pivot goes up.
    """
    if not pivots:
        return [b]
    if errors.DEBUG:
        _check_sorted(pivots, "pivot batch")
        _check_sorted([key(x) for x in b], "partitioned batch")
    base, lo, hi = b._base, b._lo, b._hi
    find = bisect_left if strict else bisect_right
    if key is _identity:
        cuts = [find(base, p, lo, hi) for p in pivots]
    else:
        cuts = [find(base, p, lo, hi, key=key) for p in pivots]
    per = ceil_log2(hi - lo + 1) + 1
    meter.compare(per * len(pivots), per + ceil_log2(len(pivots)))
    out = []
    prev = lo
    for c in cuts:
        out.append(Batch._view(base, prev, c))
        prev = c
    out.append(Batch._view(base, prev, hi))
    return out


def merge(
    a: Batch,
    b: Batch,
    key: Callable[[Any], Any] = _identity,
    combine: Callable[[Any, Any], Any] | None = None,
    meter: Meter = NULL_METER,
) -> Batch:
    """Stable merge of two sorted batches.

    Among equal keys the items of ``a`` come first.  With ``combine`` every run
    of equal keys collapses to one item, folded left to right.
    """
    if errors.DEBUG:
        _check_sorted([key(x) for x in a], "left merge input")
        _check_sorted([key(x) for x in b], "right merge input")
    la, lb = a.to_list(), b.to_list()
    na, nb = len(la), len(lb)
    out: list = []
    i = j = 0
    comps = 0
    if combine is None:
        while i < na and j < nb:
            comps += 1
            if key(lb[j]) < key(la[i]):
                out.append(lb[j])
                j += 1
            else:
                out.append(la[i])
                i += 1
        out.extend(la[i:])
        out.extend(lb[j:])
    else:
        last_key = _SENTINEL
        while i < na or j < nb:
            if j >= nb or (i < na and not key(lb[j]) < key(la[i])):
                x = la[i]
                i += 1
            else:
                x = lb[j]
                j += 1
            kx = key(x)
            comps += 1
            if out and kx == last_key:
                out[-1] = combine(out[-1], x)
            else:
                out.append(x)
                last_key = kx
    n = na + nb
    span = ceil_log2(n) ** 2 + 1
    meter.compare(comps, span)
    meter.charge(n, 0)
    return _wrap(out)


_SENTINEL = object()


class Bunch:
    """An unordered-by-key multiset of batches, appended in O(1)."""

    __slots__ = ("parts", "size")

    def __init__(self) -> None:
        self.parts: list[Batch] = []
        self.size = 0

    def add(self, b: Batch, meter: Meter = NULL_METER) -> None:
        meter.charge(1)
        if len(b):
            self.parts.append(b)
            self.size += len(b)

    def to_batch(self, meter: Meter = NULL_METER) -> Batch:
        return join(self.parts, meter)

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"Bunch(size={self.size}, parts={len(self.parts)})"


def bunch_add(u: Bunch, b: Batch, meter: Meter = NULL_METER) -> None:
    u.add(b, meter)


def bunch_to_batch(u: Bunch, meter: Meter = NULL_METER) -> Batch:
    return u.to_batch(meter)
