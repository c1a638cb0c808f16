"""Doubly-exponential segment chains shared by all finger structures.

Chain 0 holds the smallest keys, with ``S0[0]`` at the front.  Chain 1 holds
the largest keys, with ``S1[0]`` at the back, so within chain 1 a higher level
means smaller keys.  ``shift_out`` moves items one level inward (towards the
middle of the key range) and ``shift_in`` moves them one level outward.
"""

from __future__ import annotations

from collections.abc import Callable
from typing import Any

from .bpmap import BPMap
from .errors import InvariantViolation
from .meter import Meter

_MAX_LEVEL = 24
CAP = [2 ** (2 ** (k + 1)) for k in range(_MAX_LEVEL)]
TARGET = [2 * c for c in CAP]


def c(k: int) -> int:
    """Imbalance tolerance of level ``k``: 2^(2^(k+1))."""
    return CAP[k]


def t(k: int) -> int:
    """Target size of a non-last segment at level ``k``."""
    return TARGET[k]


class Segment:
    __slots__ = ("map", "frozen")

    def __init__(self, store: BPMap | None = None) -> None:
        self.map = store if store is not None else BPMap()
        self.frozen: int | None = None

    @property
    def size(self) -> int:
        return len(self.map)

    def visible_size(self) -> int:
        return self.frozen if self.frozen is not None else len(self.map)

    def __repr__(self) -> str:
        return f"Segment(size={len(self.map)})"


def move_inward(i: int, lower: Segment, upper: Segment, q: int, meter: Meter) -> None:
    """Move the ``q`` innermost items of ``lower`` (level k) into ``upper``
    (level k+1) of chain ``i``."""
    if q <= 0:
        return
    n = len(lower.map)
    if i == 0:
        keep, move = lower.map.split_at_rank(n - q, meter)
        lower.map = keep
        upper.map = BPMap.join_maps(move, upper.map, meter)
    else:
        move, keep = lower.map.split_at_rank(q, meter)
        lower.map = keep
        upper.map = BPMap.join_maps(upper.map, move, meter)


def move_outward(i: int, lower: Segment, upper: Segment, q: int, meter: Meter) -> None:
    """Move the ``q`` outermost items of ``upper`` (level k+1) into ``lower``
    (level k) of chain ``i``."""
    if q <= 0:
        return
    n = len(upper.map)
    if i == 0:
        move, keep = upper.map.split_at_rank(q, meter)
        upper.map = keep
        lower.map = BPMap.join_maps(lower.map, move, meter)
    else:
        keep, move = upper.map.split_at_rank(n - q, meter)
        upper.map = keep
        lower.map = BPMap.join_maps(move, lower.map, meter)


def segment_state(size: int, k: int, last: bool) -> int:
    """+1 overfull, -1 underfull, 0 balanced."""
    if size > TARGET[k] + CAP[k]:
        return 1
    if size < TARGET[k] - CAP[k] and not last:
        return -1
    return 0


class Chains:
    """The two chains S0 and S1 plus the primitive moves between segments.

    With ``tail_open`` set, the top level is treated as non-last because more
    levels live elsewhere (the pipelined final slab).
    """

    def __init__(self) -> None:
        self.chains: tuple[list[Segment], list[Segment]] = ([Segment()], [Segment()])
        self.touched = -1
        self.tail_open = False

    # -- inspection -------------------------------------------------------

    @classmethod
    def from_map(cls, store: BPMap, meter: Meter) -> "Chains":
        """Balanced chains over all items of ``store`` (which is emptied):
        full target-size levels from both ends, the rest halved between the
        two segments of the last section."""
        out = cls()
        c0, c1 = out.chains
        c0.clear()
        c1.clear()
        k = 0
        rest = store
        while len(rest) > 2 * (TARGET[k] + CAP[k]):
            lo, rest = rest.split_at_rank(TARGET[k], meter)
            rest, hi = rest.split_at_rank(len(rest) - TARGET[k], meter)
            c0.append(Segment(lo))
            c1.append(Segment(hi))
            k += 1
        lo, hi = rest.split_at_rank(len(rest) // 2, meter)
        c0.append(Segment(lo))
        c1.append(Segment(hi))
        return out

    def joined(self, meter: Meter) -> BPMap:
        """All items as one map; the chains are emptied."""
        c0, c1 = self.chains
        acc = BPMap()
        for s in c0:
            acc = BPMap.join_maps(acc, s.map, meter)
        for s in reversed(c1):
            acc = BPMap.join_maps(acc, s.map, meter)
        self.chains = ([Segment()], [Segment()])
        return acc

    def __len__(self) -> int:
        return max(len(self.chains[0]), len(self.chains[1]))

    def seg(self, i: int, k: int) -> Segment | None:
        chain = self.chains[i]
        return chain[k] if k < len(chain) else None

    def map_pair(self, k: int) -> tuple[BPMap | None, BPMap | None]:
        c0, c1 = self.chains
        return (c0[k].map if k < len(c0) else None, c1[k].map if k < len(c1) else None)

    def size(self, i: int, k: int) -> int:
        chain = self.chains[i]
        return len(chain[k].map) if k < len(chain) else 0

    def is_last(self, i: int, k: int) -> bool:
        return k == len(self.chains[i]) - 1 and not self.tail_open

    def top_is_last(self, k: int) -> bool:
        """Whether S[k] is the last section."""
        return k == len(self) - 1 and not self.tail_open

    def state(self, i: int, k: int, size: int | None = None) -> int:
        """+1 overfull, -1 underfull, 0 balanced."""
        chain = self.chains[i]
        s = len(chain[k].map) if size is None else size
        if s > TARGET[k] + CAP[k]:
            return 1
        if s < TARGET[k] - CAP[k] and (k != len(chain) - 1 or self.tail_open):
            return -1
        return 0

    def first_underfull(self, i: int, lo: int, hi: int) -> int | None:
        for k in range(lo, min(hi, len(self.chains[i]))):
            if self.state(i, k) < 0:
                return k
        return None

    def total(self) -> int:
        return sum(len(s.map) for ch in self.chains for s in ch)

    def items(self) -> list[tuple[Any, Any]]:
        out: list = []
        for s in self.chains[0]:
            out.extend(s.map.items())
        for s in reversed(self.chains[1]):
            out.extend(s.map.items())
        return out

    def sizes(self) -> tuple[list[int], list[int]]:
        return [s.size for s in self.chains[0]], [s.size for s in self.chains[1]]

    def _touch(self, k: int) -> None:
        if k > self.touched:
            self.touched = k

    # -- fits-in ----------------------------------------------------------

    def fit_at(self, key, k: int, meter: Meter, last: bool | None = None) -> int:
        """Side of S[k] that ``key`` fits in, or -1 if it belongs further in.

        ``last`` overrides whether S[k] counts as the last section.
        """
        c0, c1 = self.chains
        if k < len(c0):
            m0 = c0[k].map
            if m0._root is not None:
                meter.cmp += 1
                meter.work += 1
                if not m0.max_key() < key:
                    return 0
        if k < len(c1):
            m1 = c1[k].map
            if m1._root is not None:
                meter.cmp += 1
                meter.work += 1
                if not key < m1.min_key():
                    return 1
        if last is None:
            last = k >= len(c0) - 1 and k >= len(c1) - 1 and not self.tail_open
        if last:
            return 0 if k < len(c0) else 1
        return -1

    def locate(self, key, meter: Meter, start: int = 0) -> tuple[int, int]:
        """Segment ``(side, level)`` that ``key`` fits in."""
        top = len(self) - 1
        for k in range(start, top + 1):
            side = self.fit_at(key, k, meter, k == top and not self.tail_open)
            if side >= 0:
                return side, k
        raise InvariantViolation("key fits in no segment")

    # -- moves ------------------------------------------------------------

    def shift_out(self, i: int, k: int, q: int, meter: Meter) -> None:
        """Move the ``q`` innermost items of S_i[k] to S_i[k+1]."""
        if q <= 0:
            return
        chain = self.chains[i]
        self._touch(k + 1)
        move_inward(i, chain[k], chain[k + 1], q, meter)

    def shift_in(self, i: int, k: int, q: int, meter: Meter) -> None:
        """Move the ``q`` outermost items of S_i[k+1] to S_i[k]."""
        if q <= 0:
            return
        chain = self.chains[i]
        self._touch(k + 1)
        move_outward(i, chain[k], chain[k + 1], q, meter)

    def cross_shift(self, i: int, ks: int, kd: int, q: int, meter: Meter) -> None:
        """Move the ``q`` innermost items of S_i[ks] to S_j[kd], j = 1 - i.

        Both segments must be the innermost ones of their chains.
        """
        if q <= 0:
            return
        src = self.chains[i][ks]
        dst = self.chains[1 - i][kd]
        self._touch(max(ks, kd))
        n = len(src.map)
        if i == 0:
            keep, move = src.map.split_at_rank(n - q, meter)
            src.map = keep
            dst.map = BPMap.join_maps(move, dst.map, meter)
        else:
            move, keep = src.map.split_at_rank(q, meter)
            src.map = keep
            dst.map = BPMap.join_maps(dst.map, move, meter)

    def move_all_across(self, i: int, k: int, meter: Meter) -> None:
        """Hand every item of S_i[k] to the (empty) S_j[k]."""
        src = self.chains[i][k]
        dst = self.chains[1 - i][k]
        if dst.size:
            raise InvariantViolation("cross-chain move into a nonempty segment")
        meter.charge(1)
        self._touch(k)
        dst.map, src.map = src.map, dst.map

    def fill(self, i: int, lo: int, src: int, meter: Meter) -> None:
        """Fill S_i[lo..src-1] from above so each prefix S_i[lo..j] totals
        the sum of its targets, or as close as the items allow.

        A last segment emptied on the way is removed.
        """
        chain = self.chains[i]
        for j in range(src - 1, lo - 1, -1):
            if j + 1 >= len(chain):
                continue
            want = sum(TARGET[lo:j + 1])
            have = sum(len(chain[a].map) for a in range(lo, j + 1))
            need = want - have
            if need > 0:
                self.shift_in(i, j, min(need, len(chain[j + 1].map)), meter)
            elif need < 0:
                self.shift_out(i, j, min(-need, len(chain[j].map)), meter)
            if j + 1 == len(chain) - 1 and len(chain[j + 1].map) == 0 and not self.tail_open:
                chain.pop()

    # -- sequential rebalancing -------------------------------------------

    def cascade(self, i: int, k: int, meter: Meter) -> None:
        """Rebalance S_i[k] and then every segment above it that needs it."""
        chain = self.chains[i]
        while k < len(chain):
            st = self.state(i, k)
            if st == 0:
                return
            if st > 0:
                if k == len(chain) - 1:
                    chain.append(Segment())
                self.shift_out(i, k, len(chain[k].map) - TARGET[k], meter)
            else:
                q = min(TARGET[k] - len(chain[k].map), len(chain[k + 1].map))
                self.shift_in(i, k, q, meter)
                if k + 1 == len(chain) - 1 and len(chain[k + 1].map) == 0:
                    chain.pop()
                    return
            k += 1

    def balance_chain_lengths(self, meter: Meter) -> None:
        """Equalize chain lengths after a single sequential operation."""
        c0, c1 = self.chains
        if len(c0) == len(c1):
            return
        if abs(len(c0) - len(c1)) > 1:
            raise InvariantViolation(f"chain lengths {len(c0)} and {len(c1)} differ by more than one")
        i = 0 if len(c0) > len(c1) else 1
        j = 1 - i
        cj = self.chains[j]
        lj = len(cj) - 1
        li = lj + 1
        dst = cj[lj]
        if len(dst.map) < TARGET[lj]:
            q = min(TARGET[lj] - len(dst.map), self.size(i, li))
            self.cross_shift(i, li, lj, q, meter)
        if len(dst.map) < TARGET[lj]:
            if self.size(i, li):
                raise InvariantViolation("surplus segment not drained")
            self.chains[i].pop()
        else:
            cj.append(Segment())

    # -- batched rebalancing ----------------------------------------------

    def sweep(
        self,
        i: int,
        meter: Meter,
        skipped: Callable[[int], bool] = lambda k: False,
        slab_starts: tuple[int, ...] = (),
        stop: int | None = None,
        check: bool = False,
    ) -> None:
        """Level-by-level segment rebalancing of chain ``i`` after a batch.

        Iteration ``k`` settles S_i[k-1] (shift an overflow up; fill an
        underfull run from S_i[k] when S_i[k] is rich enough or last) and
        grows the chain if S_i[k] is an overfull last segment.  When S_i[k]
        is balanced and the batch never reached S[k], the rest of the slab is
        skipped.  ``stop`` bounds the levels visited.
        """
        chain = self.chains[i]
        k = 0
        while k < len(chain) and (stop is None or k < stop):
            if k > 0:
                st = self.state(i, k - 1)
                if st > 0:
                    self.shift_out(i, k - 1, len(chain[k - 1].map) - TARGET[k - 1], meter)
                elif st < 0 and (len(chain[k].map) >= CAP[k] // 2 or self.is_last(i, k)):
                    lo = self.first_underfull(i, 0, k)
                    self.fill(i, lo, k, meter)
            if k >= len(chain):
                break
            if self.is_last(i, k) and self.state(i, k) > 0:
                chain.append(Segment())
            if check:
                self.check_sweep_prefix(i, k)
            if skipped(k) and self.state(i, k) == 0:
                nxt = next((s for s in slab_starts if s > k), None)
                if nxt is None:
                    break
                k = nxt
                continue
            k += 1

    def check_sweep_prefix(self, i: int, k: int) -> None:
        """Imbalanced segments among S_i[0..k] are S_i[k] alone or an
        underfull run ending at S_i[k]."""
        top = min(k, len(self.chains[i]) - 1)
        bad = [a for a in range(top + 1) if self.state(i, a) != 0]
        if not bad:
            return
        first = bad[0]
        if first == top:
            return
        if all(self.state(i, a) < 0 for a in range(first, top + 1)):
            return
        raise InvariantViolation(f"sweep prefix invariant broken in chain {i} at level {k}: {self.sizes()}")

    def rebalance_chains(self, meter: Meter, cap: int | None = 2) -> int:
        """Equalize chain lengths after a batch; returns the iterations used."""
        c0, c1 = self.chains
        iters = 0
        while len(c0) != len(c1):
            iters += 1
            if cap is not None and iters > cap:
                raise InvariantViolation(f"chain rebalancing needed more than {cap} iterations")
            i = 0 if len(c0) > len(c1) else 1
            j = 1 - i
            ci, cj = self.chains[i], self.chains[j]
            k = len(ci) - 1
            while len(cj) < k + 1:
                cj.append(Segment())
            self.move_all_across(i, k, meter)
            lo = self.first_underfull(j, 0, k)
            if lo is not None:
                self.fill(j, lo, k, meter)
            if len(cj) <= k or len(cj[k].map) == 0:
                if len(cj) > k:
                    cj.pop()
                ci.pop()
        return iters

    # -- invariant scans --------------------------------------------------

    def violations(self, deep: bool = False, equal_chains: bool = True) -> list[str]:
        out = []
        c0, c1 = self.chains
        if equal_chains and len(c0) != len(c1):
            out.append(f"chain lengths differ: {len(c0)} vs {len(c1)}")
        for i in (0, 1):
            for k in range(len(self.chains[i])):
                if self.state(i, k) != 0:
                    out.append(f"S{i}[{k}] imbalanced: size {self.size(i, k)}, last={self.is_last(i, k)}")
        prev = None
        for key, _ in self.items():
            if prev is not None and not prev[0] < key:
                out.append(f"key order broken at {key!r}")
                break
            prev = (key,)
        if deep:
            for ch in self.chains:
                for s in ch:
                    try:
                        s.map.check()
                    except AssertionError as e:
                        out.append(str(e))
        return out
