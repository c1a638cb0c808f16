"""Finger structure with ``f`` movable fingers.

The key range is cut by the fingers into ``f + 1`` sectors, each a batched
finger structure of its own.  A batch first moves fingers (last move per
finger wins, fingers in index order), transferring the items a finger
passes over from one sector to its neighbour, and then routes every map
operation to the sector owning its key.

A finger position is ``NEG_INF``, ``POS_INF`` or a cut ``(key, after)``
lying just after ``key`` when ``after`` is true and just before it
otherwise, so a finger may sit between two stored items.
"""

from __future__ import annotations

from bisect import bisect_left
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Any, Union

from . import errors
from .bpmap import BPMap
from .cost import CostLedger
from .errors import InvariantViolation
from .fs1 import FS1
from .meter import Meter, ceil_log2
from .ops import NEG_INF, POS_INF, Operation, OpResult
from .segments import TARGET, Chains, Segment
Cut = Union[tuple[Any, bool], str]


def _enc(cut: Cut) -> tuple:
    if cut == NEG_INF:
        return (0,)
    if cut == POS_INF:
        return (2,)
    key, after = cut
    return (1, key, 1 if after else 0)


def _probe(key) -> tuple:
    return (1, key, 0.5)


def as_cut(pos: Any) -> Cut:
    """Normalize a finger position; a bare key means just before it."""
    if pos in (NEG_INF, POS_INF):
        return pos
    if isinstance(pos, tuple) and len(pos) == 2 and isinstance(pos[1], bool):
        return pos
    return (pos, False)


@dataclass(slots=True)
class FingerMove:
    finger: int
    cut: Cut


@dataclass(frozen=True, slots=True)
class MoveOutcome:
    accepted: bool
    travelled: int = 0


def _left_count(store: BPMap, cut: Cut, meter: Meter) -> int:
    """Items of ``store`` lying left of ``cut``."""
    if cut == NEG_INF:
        return 0
    if cut == POS_INF:
        return len(store)
    key, after = cut
    return store.rank(key, inclusive=after, meter=meter)


class MultiFingerFS:
    def __init__(
        self,
        items: Iterable[tuple[Any, Any]] = (),
        fingers: Sequence[Any] = (),
        p: int = 4,
    ) -> None:
        self.fingers: list[Cut] = [as_cut(x) for x in fingers]
        enc = [_enc(c) for c in self.fingers]
        if any(a > b for a, b in zip(enc, enc[1:])):
            raise ValueError("fingers must be in key order")
        self.ledger = CostLedger()
        self.linearization: list[Operation | FingerMove] = []
        parts: list[list[tuple[Any, Any]]] = [[] for _ in range(len(self.fingers) + 1)]
        for kv in items:
            parts[self.sector_of(kv[0])].append(kv)
        self.sectors = [FS1(part, p=p) for part in parts]
        for s in self.sectors:
            s.ledger = self.ledger

    @property
    def f(self) -> int:
        return len(self.fingers)

    def sector_of(self, key) -> int:
        return bisect_left([_enc(c) for c in self.fingers], _probe(key))

    def __len__(self) -> int:
        return sum(len(s) for s in self.sectors)

    def items(self) -> list[tuple[Any, Any]]:
        out: list[tuple[Any, Any]] = []
        for s in self.sectors:
            out.extend(s.items())
        return out

    def max_level(self) -> int:
        return max(s.max_level() for s in self.sectors)

    # -- batches ---------------------------------------------------------------

    def process_batch(self, batch: Sequence[Operation | FingerMove]) -> list[OpResult | MoveOutcome]:
        results: list[Any] = [None] * len(batch)
        moves: dict[int, list[int]] = {}
        plain: list[int] = []
        for idx, x in enumerate(batch):
            if isinstance(x, FingerMove):
                if not 0 <= x.finger < self.f:
                    raise IndexError(f"finger {x.finger} out of range for {self.f} fingers")
                moves.setdefault(x.finger, []).append(idx)
            else:
                plain.append(idx)
        for j in sorted(moves):
            idxs = moves[j]
            final = batch[idxs[-1]]
            try:
                out = MoveOutcome(True, self.move_finger(j, final.cut))
                self.linearization.append(final)
            except ValueError:
                out = MoveOutcome(False)
            for i in idxs:
                results[i] = out

        meter = Meter()
        cost = ceil_log2(self.f + 1)
        routed: list[list[int]] = [[] for _ in self.sectors]
        enc = [_enc(c) for c in self.fingers]
        for idx in plain:
            routed[bisect_left(enc, _probe(batch[idx].key))].append(idx)
        meter.compare(cost * len(plain), span=ceil_log2(len(plain) + 1) + cost)
        self.ledger.record("partition", meter, [batch[i].id for i in plain])

        for sector, idxs in zip(self.sectors, routed):
            if not idxs:
                continue
            sector.linearization = []
            res = sector.process_batch([batch[i] for i in idxs])
            for i, r in zip(idxs, res):
                results[i] = r
            self.linearization.extend(sector.linearization)
        return results

    # -- finger moves ------------------------------------------------------------

    def move_finger(self, j: int, pos: Any) -> int:
        """Move finger ``j`` to ``pos``; returns the number of items passed
        over.  Raises ValueError if it would pass a neighbouring finger."""
        if not 0 <= j < self.f:
            raise IndexError(f"finger {j} out of range for {self.f} fingers")
        cut = as_cut(pos)
        new = _enc(cut)
        old = _enc(self.fingers[j])
        if j > 0 and new < _enc(self.fingers[j - 1]):
            raise ValueError(f"finger {j} cannot pass finger {j - 1}")
        if j + 1 < self.f and new > _enc(self.fingers[j + 1]):
            raise ValueError(f"finger {j} cannot pass finger {j + 1}")
        left, right = self.sectors[j].segments, self.sectors[j + 1].segments
        meter = Meter()
        moved = 0
        if new < old:
            moved = self._transfer(left, right, 1, cut, meter)
        elif new > old:
            moved = self._transfer(right, left, 0, cut, meter)
        self.fingers[j] = cut
        self.ledger.record("finger", meter)
        if errors.DEBUG:
            for s in (left, right):
                bad = s.violations()
                if bad:
                    raise InvariantViolation(f"sector unbalanced after finger move: {bad[0]}")
        return moved

    def _transfer(self, donor: Chains, recv: Chains, i: int, cut: Cut, meter: Meter) -> int:
        """Hand the donor's items on the receiver's side of ``cut`` over.

        ``i`` is the donor chain facing the finger (1 when the finger moves
        left into the left sector, 0 when it moves right)."""
        counts = []
        for ch in donor.chains:
            for s in ch:
                left = _left_count(s.map, cut, meter)
                counts.append(len(s.map) - left if i == 1 else left)
        q = sum(counts)
        if q == 0:
            return 0
        q_near = sum(counts[: len(donor.chains[0])]) if i == 0 else sum(counts[len(donor.chains[0]) :])
        if q_near == q:
            self._near_transfer(donor, recv, i, q, meter)
        else:
            self._rebuild(donor, recv, i, q, meter)
        meter.fork(
            lambda: self._rebalance(donor, meter),
            lambda: self._rebalance(recv, meter),
        )
        return q

    @staticmethod
    def _near_transfer(donor: Chains, recv: Chains, i: int, q: int, meter: Meter) -> None:
        dch = donor.chains[i]
        acc = 0
        k = 0
        while acc + len(dch[k].map) < q:
            acc += len(dch[k].map)
            k += 1
        # cut the q items nearest the finger out of S_i[0..k]
        take = q - acc
        seg = dch[k].map
        if i == 1:
            keep, part = seg.split_at_rank(len(seg) - take, meter)
        else:
            part, keep = seg.split_at_rank(take, meter)
        dch[k].map = keep
        pieces = [dch[a].map for a in range(k)] + [part]
        for a in range(k):
            dch[a].map = BPMap()
        b = BPMap()
        for piece in reversed(pieces) if i == 1 else pieces:
            b = BPMap.join_maps(b, piece, meter)

        # push the receiver's near segments 0..k into level k+1
        j = 1 - i
        rch = recv.chains[j]
        while len(rch) < k + 2:
            rch.append(Segment())
        acc_map = BPMap()
        order = range(k + 1) if j == 0 else range(k, -1, -1)
        for a in order:
            acc_map = BPMap.join_maps(acc_map, rch[a].map, meter)
            rch[a].map = BPMap()
        if j == 0:
            rch[k + 1].map = BPMap.join_maps(acc_map, rch[k + 1].map, meter)
        else:
            rch[k + 1].map = BPMap.join_maps(rch[k + 1].map, acc_map, meter)

        # refill levels 0..k-1 to target from the finger side, rest to level k
        for a in range(k):
            n = min(TARGET[a], len(b))
            if j == 0:
                rch[a].map, b = b.split_at_rank(n, meter)
            else:
                b, rch[a].map = b.split_at_rank(len(b) - n, meter)
        rch[k].map = b

    @staticmethod
    def _rebuild(donor: Chains, recv: Chains, i: int, q: int, meter: Meter) -> None:
        """Move reaching into the donor's far chain: join both sectors and
        split them again at the new boundary."""
        d = donor.joined(meter)
        r = recv.joined(meter)
        if i == 1:
            lo, hi = d.split_at_rank(len(d) - q, meter)
            hi = BPMap.join_maps(hi, r, meter)
            donor.chains = Chains.from_map(lo, meter).chains
            recv.chains = Chains.from_map(hi, meter).chains
        else:
            lo, hi = d.split_at_rank(q, meter)
            lo = BPMap.join_maps(r, lo, meter)
            recv.chains = Chains.from_map(lo, meter).chains
            donor.chains = Chains.from_map(hi, meter).chains

    @staticmethod
    def _rebalance(segs: Chains, meter: Meter) -> None:
        check = errors.DEBUG
        meter.fork(lambda: segs.sweep(0, meter, check=check), lambda: segs.sweep(1, meter, check=check))
        segs.rebalance_chains(meter, cap=None)

    # -- checks -------------------------------------------------------------------

    def violations(self, deep: bool = False) -> list[str]:
        out: list[str] = []
        for idx, s in enumerate(self.sectors):
            out.extend(f"sector {idx}: {v}" for v in s.violations(deep))
        enc = [_enc(c) for c in self.fingers]
        for idx, s in enumerate(self.sectors):
            for key, _ in s.items():
                if bisect_left(enc, _probe(key)) != idx:
                    out.append(f"key {key!r} stored in sector {idx} outside its range")
                    break
        return out


def mf_process_batch(s: MultiFingerFS, b: Sequence[Operation | FingerMove]) -> list[OpResult | MoveOutcome]:
    return s.process_batch(b)


def mf_move_finger(s: MultiFingerFS, finger: int, new_key: Any) -> None:
    s.move_finger(finger, new_key)
