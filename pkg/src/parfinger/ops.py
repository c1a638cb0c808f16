"""Operations, results and same-key groups."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any

from .sort import Bundle


class Kind(IntEnum):
    SEARCH = 0
    UPDATE = 1
    INSERT = 2
    DELETE = 3

    @property
    def letter(self) -> str:
        return "SUID"[self]

    @classmethod
    def from_letter(cls, ch: str) -> "Kind":
        return cls("SUID".index(ch.upper()))


_ids = itertools.count()


@dataclass(slots=True)
class Operation:
    kind: Kind
    key: Any
    value: Any = None
    id: int = field(default_factory=lambda: next(_ids))


@dataclass(frozen=True, slots=True)
class OpResult:
    """``found`` is the presence of the key just before the operation took
    effect; ``value`` is the value it held then (``None`` when absent)."""

    found: bool
    value: Any = None


ABSENT = OpResult(False, None)

NEG_INF = "-inf"
POS_INF = "+inf"


class Call:
    """One submitted operation travelling through a structure."""

    __slots__ = ("op", "key", "kind", "skey", "result", "done", "future", "level", "side", "hit")

    def __init__(self, op: Operation, done=None, future=None) -> None:
        self.op = op
        self.key = op.key
        self.kind = int(op.kind)
        self.skey = (self.kind, op.key)
        self.result: OpResult | None = None
        self.done = done
        self.future = future
        self.level = -1
        self.side = -1
        self.hit = False

    def resolve(self, res: OpResult) -> None:
        self.result = res
        if self.future is not None:
            self.future.set_result(res)
        if self.done is not None:
            self.done(self, res)

    def fail(self, exc: BaseException) -> None:
        if self.result is None and self.future is not None and not self.future.done():
            self.future.set_exception(exc)

    def __repr__(self) -> str:
        return f"Call({self.op!r}, result={self.result!r})"


class GroupOperation:
    """All calls of one kind on one key, applied as a single access.

    Members keep submission order; ``value`` is what the group stores.
    """

    __slots__ = ("kind", "key", "members", "size", "value")

    def __init__(self, members: Bundle | list[Call]) -> None:
        calls = list(members.leaves()) if isinstance(members, Bundle) else list(members)
        self.members = calls
        first = calls[0]
        self.kind = first.kind
        self.key = first.key
        self.size = len(calls)
        self.value = calls[-1].op.value

    @classmethod
    def merged(cls, groups: list["GroupOperation"]) -> "GroupOperation":
        """Concatenate groups on the same key and kind, in list order."""
        if len(groups) == 1:
            return groups[0]
        calls: list[Call] = []
        for g in groups:
            calls.extend(g.members)
        return cls(calls)

    def fan_out(self, found: bool, prior: Any) -> None:
        """Give every member the result it would see if members ran in order."""
        fan_out(self.kind, self.members, found, prior)

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"GroupOperation({Kind(self.kind).name}, {self.key!r}, size={self.size})"


def fan_out(kind: int, calls: list[Call], found: bool, prior: Any) -> None:
    if kind == Kind.SEARCH:
        res = OpResult(found, prior) if found else ABSENT
        for c in calls:
            c.resolve(res)
    elif kind == Kind.UPDATE:
        if not found:
            for c in calls:
                c.resolve(ABSENT)
            return
        v = prior
        for c in calls:
            c.resolve(OpResult(True, v))
            v = c.op.value
    elif kind == Kind.INSERT:
        calls[0].resolve(OpResult(found, prior) if found else ABSENT)
        for a, b in zip(calls, calls[1:]):
            b.resolve(OpResult(True, a.op.value))
    else:
        calls[0].resolve(OpResult(found, prior) if found else ABSENT)
        for c in calls[1:]:
            c.resolve(ABSENT)
