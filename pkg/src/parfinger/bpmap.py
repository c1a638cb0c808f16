"""Join-based AVL map with size augmentation.

Every structural change goes through ``_join``, so split, rank split, batch
access and bulk construction all inherit the AVL balance argument.  Meters
count one unit per node touched and per key comparison.
"""

from __future__ import annotations

from bisect import bisect_left
from collections.abc import Iterable, Iterator, Sequence
from typing import Any, NamedTuple

from . import errors
from .errors import ContractViolation
from .meter import NULL_METER, Meter, ceil_log2

SEARCH, UPDATE, INSERT, DELETE = 0, 1, 2, 3


class Lookup(NamedTuple):
    found: bool
    value: Any = None


ABSENT = Lookup(False, None)


class _Node:
    __slots__ = ("key", "value", "left", "right", "height", "size")

    def __init__(self, key, value) -> None:
        self.key = key
        self.value = value
        self.left = None
        self.right = None
        self.height = 1
        self.size = 1


def _h(t: _Node | None) -> int:
    return t.height if t is not None else 0


def _sz(t: _Node | None) -> int:
    return t.size if t is not None else 0


def _upd(t: _Node) -> None:
    l, r = t.left, t.right
    hl = l.height if l is not None else 0
    hr = r.height if r is not None else 0
    t.height = (hl if hl > hr else hr) + 1
    t.size = (l.size if l is not None else 0) + (r.size if r is not None else 0) + 1


def _rot_left(x: _Node) -> _Node:
    y = x.right
    x.right = y.left
    _upd(x)
    y.left = x
    _upd(y)
    return y


def _rot_right(x: _Node) -> _Node:
    y = x.left
    x.left = y.right
    _upd(x)
    y.right = x
    _upd(y)
    return y


def _join_right(t: _Node, n: _Node, r: _Node | None, m: Meter) -> _Node:
    m.work += 1
    m.span += 1
    c = t.right
    if _h(c) <= _h(r) + 1:
        n.left = c
        n.right = r
        _upd(n)
        if n.height <= _h(t.left) + 1:
            t.right = n
            _upd(t)
            return t
        t.right = _rot_right(n)
        _upd(t)
        return _rot_left(t)
    t2 = _join_right(c, n, r, m)
    t.right = t2
    _upd(t)
    if t2.height <= _h(t.left) + 1:
        return t
    return _rot_left(t)


def _join_left(l: _Node | None, n: _Node, t: _Node, m: Meter) -> _Node:
    m.work += 1
    m.span += 1
    c = t.left
    if _h(c) <= _h(l) + 1:
        n.left = l
        n.right = c
        _upd(n)
        if n.height <= _h(t.right) + 1:
            t.left = n
            _upd(t)
            return t
        t.left = _rot_left(n)
        _upd(t)
        return _rot_right(t)
    t2 = _join_left(l, n, c, m)
    t.left = t2
    _upd(t)
    if t2.height <= _h(t.right) + 1:
        return t
    return _rot_right(t)


def _join(l: _Node | None, n: _Node, r: _Node | None, m: Meter) -> _Node:
    """Join ``l < n.key < r``; ``n`` is reused as a node (children overwritten)."""
    hl, hr = _h(l), _h(r)
    if hl > hr + 1:
        return _join_right(l, n, r, m)
    if hr > hl + 1:
        return _join_left(l, n, r, m)
    m.work += 1
    m.span += 1
    n.left = l
    n.right = r
    _upd(n)
    return n


def _split_last(t: _Node, m: Meter) -> tuple[_Node | None, _Node]:
    m.work += 1
    m.span += 1
    if t.right is None:
        rest = t.left
        t.left = None
        _upd(t)
        return rest, t
    rest, last = _split_last(t.right, m)
    return _join(t.left, t, rest, m), last


def _join2(l: _Node | None, r: _Node | None, m: Meter) -> _Node | None:
    if l is None:
        return r
    if r is None:
        return l
    rest, last = _split_last(l, m)
    return _join(rest, last, r, m)


def _split_key(t: _Node | None, key, m: Meter):
    if t is None:
        return None, None, None
    m.work += 1
    m.span += 1
    m.cmp += 1
    k = t.key
    if key < k:
        l, f, r = _split_key(t.left, key, m)
        return l, f, _join(r, t, t.right, m)
    if k < key:
        l, f, r = _split_key(t.right, key, m)
        return _join(t.left, t, l, m), f, r
    l, r = t.left, t.right
    t.left = t.right = None
    _upd(t)
    return l, t, r


def _split_rank(t: _Node | None, r: int, m: Meter):
    """Split into the first ``r`` entries and the rest."""
    if t is None:
        return None, None
    m.work += 1
    m.span += 1
    ls = _sz(t.left)
    if r <= ls:
        a, b = _split_rank(t.left, r, m)
        return a, _join(b, t, t.right, m)
    a, b = _split_rank(t.right, r - ls - 1, m)
    return _join(t.left, t, a, m), b


def _build(nodes: list, lo: int, hi: int) -> _Node | None:
    if lo >= hi:
        return None
    mid = (lo + hi) // 2
    n = nodes[mid]
    n.left = _build(nodes, lo, mid)
    n.right = _build(nodes, mid + 1, hi)
    _upd(n)
    return n


def _iter_nodes(t: _Node | None) -> Iterator[_Node]:
    stack = []
    node = t
    while stack or node is not None:
        while node is not None:
            stack.append(node)
            node = node.left
        node = stack.pop()
        yield node
        node = node.right


class BPMap:
    """Ordered key/value map with batch operations, split and join."""

    __slots__ = ("_root", "_min", "_max")

    def __init__(self, items: Iterable[tuple[Any, Any]] = ()) -> None:
        self._root = None
        self._min = self._max = None
        pairs = list(items)
        if pairs:
            pairs.sort(key=lambda kv: kv[0])
            dedup: dict = {}
            for k, v in pairs:
                dedup[k] = v
            self._root = _build([_Node(k, v) for k, v in dedup.items()], 0, len(dedup))

    @classmethod
    def _of(cls, root: _Node | None) -> "BPMap":
        m = cls.__new__(cls)
        m._root = root
        m._min = m._max = None
        return m

    @classmethod
    def from_sorted(cls, pairs: Sequence[tuple[Any, Any]], meter: Meter = NULL_METER) -> "BPMap":
        """Build from pairs already sorted by distinct key."""
        if errors.DEBUG:
            for i in range(1, len(pairs)):
                if not pairs[i - 1][0] < pairs[i][0]:
                    raise ContractViolation("from_sorted input not strictly increasing")
        meter.charge(len(pairs), ceil_log2(len(pairs)) + 1)
        return cls._of(_build([_Node(k, v) for k, v in pairs], 0, len(pairs)))

    def __len__(self) -> int:
        return self._root.size if self._root is not None else 0

    def __bool__(self) -> bool:
        return self._root is not None

    def __iter__(self) -> Iterator[Any]:
        return (n.key for n in _iter_nodes(self._root))

    def __contains__(self, key) -> bool:
        return self.get(key).found

    def items(self) -> Iterator[tuple[Any, Any]]:
        return ((n.key, n.value) for n in _iter_nodes(self._root))

    def keys(self) -> list:
        return [n.key for n in _iter_nodes(self._root)]

    @property
    def height(self) -> int:
        return _h(self._root)

    def min_key(self):
        """Smallest key (cached until the next mutation); ``None`` if empty."""
        if self._min is None and self._root is not None:
            t = self._root
            while t.left is not None:
                t = t.left
            self._min = (t.key,)
        return self._min[0] if self._min is not None else None

    def max_key(self):
        if self._max is None and self._root is not None:
            t = self._root
            while t.right is not None:
                t = t.right
            self._max = (t.key,)
        return self._max[0] if self._max is not None else None

    def _dirty(self) -> None:
        self._min = self._max = None

    def get(self, key, meter: Meter = NULL_METER) -> Lookup:
        t = self._root
        c = 0
        while t is not None:
            c += 1
            k = t.key
            if key < k:
                t = t.left
            elif k < key:
                t = t.right
            else:
                meter.cmp += c
                meter.work += c
                meter.span += c
                return Lookup(True, t.value)
        meter.cmp += c
        meter.work += c + 1
        meter.span += c + 1
        return ABSENT

    def unsorted_batch_search(self, keys: Iterable[Any], meter: Meter = NULL_METER) -> list[Lookup]:
        """Look up every key independently; duplicates are fine."""
        out = []
        base = meter.span
        deepest = 0
        for k in keys:
            meter.span = base
            out.append(self.get(k, meter))
            d = meter.span - base
            if d > deepest:
                deepest = d
        meter.span = base + deepest + ceil_log2(len(out)) + 1
        return out

    def access(self, kind: int, key, value=None, meter: Meter = NULL_METER) -> Lookup:
        """Apply one operation and return the prior state of ``key``."""
        if kind == SEARCH:
            return self.get(key, meter)
        if kind == UPDATE:
            t = self._root
            c = 0
            while t is not None:
                c += 1
                if key < t.key:
                    t = t.left
                elif t.key < key:
                    t = t.right
                else:
                    old = t.value
                    t.value = value
                    meter.cmp += c
                    meter.work += c
                    meter.span += c
                    return Lookup(True, old)
            meter.cmp += c
            meter.work += c + 1
            meter.span += c + 1
            return ABSENT
        if kind == INSERT:
            res = self.access(UPDATE, key, value, meter)
            if res.found:
                return res
            n = _Node(key, value)
            l, _, r = _split_key(self._root, key, meter)
            self._root = _join(l, n, r, meter)
            mn, mx = self._min, self._max
            if mn is not None and key < mn[0]:
                self._min = (key,)
            if mx is not None and mx[0] < key:
                self._max = (key,)
            return ABSENT
        if kind == DELETE:
            l, f, r = _split_key(self._root, key, meter)
            if f is None:
                self._root = _join2(l, r, meter)
                return ABSENT
            self._root = _join2(l, r, meter)
            self._dirty()
            return Lookup(True, f.value)
        raise ValueError(f"unknown access kind {kind!r}")

    def sorted_batch_access(self, ops: Sequence[Any], meter: Meter = NULL_METER) -> list[Lookup]:
        """Apply operations sorted by distinct key; return prior states.

        ``ops`` are objects with ``kind``, ``key`` and ``value`` attributes.
        The batch is split around the root key and both halves recurse on the
        root's subtrees (as parallel branches for the span count).
        """
        n_ops = len(ops)
        if n_ops == 0:
            return []
        keys = [o.key for o in ops]
        if errors.DEBUG:
            for i in range(1, n_ops):
                if not keys[i - 1] < keys[i]:
                    raise ContractViolation("sorted_batch_access needs strictly increasing keys")
        out: list = [None] * n_ops
        self._root, changed = _access(self._root, ops, keys, 0, n_ops, out, meter)
        if changed:
            self._dirty()
        return out

    def rank(self, key, inclusive: bool = False, meter: Meter = NULL_METER) -> int:
        """Number of keys below ``key`` (or at most ``key`` if inclusive)."""
        t = self._root
        r = 0
        c = 0
        while t is not None:
            c += 1
            if key < t.key or (key == t.key and not inclusive):
                t = t.left
            else:
                r += _sz(t.left) + 1
                t = t.right
        meter.compare(c)
        return r

    def split_at_rank(self, r: int, meter: Meter = NULL_METER) -> tuple["BPMap", "BPMap"]:
        """Split into the first ``r`` entries and the rest; empties ``self``."""
        n = len(self)
        if not 0 <= r <= n:
            raise IndexError(f"rank {r} outside [0, {n}]")
        if r == 0:
            a, b = None, self._root
        elif r == n:
            a, b = self._root, None
        else:
            a, b = _split_rank(self._root, r, meter)
        self._root = None
        self._dirty()
        meter.charge(1)
        return BPMap._of(a), BPMap._of(b)

    @staticmethod
    def join_maps(lo: "BPMap", hi: "BPMap", meter: Meter = NULL_METER) -> "BPMap":
        """Concatenate maps with every key of ``lo`` below every key of ``hi``.

        Both arguments are emptied.
        """
        if lo._root is not None and hi._root is not None:
            if not lo.max_key() < hi.min_key():
                raise ContractViolation("join_maps key ranges overlap")
        mn = lo._min if lo._root is not None else hi._min
        mx = hi._max if hi._root is not None else lo._max
        root = _join2(lo._root, hi._root, meter)
        meter.charge(1)
        lo._root = hi._root = None
        lo._dirty()
        hi._dirty()
        out = BPMap._of(root)
        out._min, out._max = mn, mx
        return out

    def check(self) -> None:
        """Raise AssertionError unless keys are increasing and AVL fields hold."""
        prev = None
        first = True
        for node in _iter_nodes(self._root):
            if not first and not prev < node.key:
                raise AssertionError("keys not strictly increasing")
            first = False
            prev = node.key
            hl, hr = _h(node.left), _h(node.right)
            if abs(hl - hr) > 1 or node.height != max(hl, hr) + 1:
                raise AssertionError("AVL balance or height field broken")
            if node.size != _sz(node.left) + _sz(node.right) + 1:
                raise AssertionError("size field broken")

    def __repr__(self) -> str:
        return f"BPMap({dict(self.items())!r})"


def _access(t, ops, keys, lo, hi, out, m: Meter) -> tuple[_Node | None, bool]:
    """Apply ``ops[lo:hi]`` under ``t``; returns the new root and whether
    the shape (or any size) below it changed."""
    if lo >= hi:
        return t, False
    if t is None:
        new = []
        for idx in range(lo, hi):
            o = ops[idx]
            out[idx] = ABSENT
            if o.kind == INSERT:
                new.append(_Node(o.key, o.value))
        n = hi - lo
        m.work += n
        m.span += ceil_log2(n) + 1
        return _build(new, 0, len(new)), bool(new)
    k = t.key
    i = bisect_left(keys, k, lo, hi)
    found = i < hi and keys[i] == k
    j = i + 1 if found else i
    c = ceil_log2(hi - lo + 1) + 1
    m.cmp += c
    m.work += c + 1
    m.span += c + 1
    base = m.span
    left, lc = _access(t.left, ops, keys, lo, i, out, m)
    sl = m.span - base
    m.span = base
    right, rc = _access(t.right, ops, keys, j, hi, out, m)
    sr = m.span - base
    m.span = base + (sl if sl > sr else sr)
    if found:
        o = ops[i]
        kind = o.kind
        out[i] = Lookup(True, t.value)
        if kind == DELETE:
            return _join2(left, right, m), True
        if kind != SEARCH:
            t.value = o.value
    if not (lc or rc):
        return t, False
    return _join(left, t, right, m), True


def unsorted_batch_search(m: BPMap, keys: Iterable[Any], meter: Meter = NULL_METER) -> list[Lookup]:
    return m.unsorted_batch_search(keys, meter)


def sorted_batch_access(m: BPMap, ops: Sequence[Any], meter: Meter = NULL_METER) -> list[Lookup]:
    return m.sorted_batch_access(ops, meter)


def split_at_rank(m: BPMap, r: int, meter: Meter = NULL_METER) -> tuple[BPMap, BPMap]:
    return m.split_at_rank(r, meter)


def join_maps(lo: BPMap, hi: BPMap, meter: Meter = NULL_METER) -> BPMap:
    return BPMap.join_maps(lo, hi, meter)
