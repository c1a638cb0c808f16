"""Concurrency primitives: test-and-set lock, reactivation wrapper,
dedicated lock with bounded bypass, and the parallel buffer.

Threads stand in for forked tasks; ``spawn`` runs a callable on
a shared pool.  Suspension is an Event wait, resumption an Event set.
"""

from __future__ import annotations

import threading
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from typing import Any

from .batch import Batch

_pool: ThreadPoolExecutor | None = None
_pool_lock = threading.Lock()


def spawn(fn: Callable[[], Any]) -> None:
    """Fork ``fn``; its exceptions are the callee's business."""
    global _pool
    if _pool is None:
        with _pool_lock:
            if _pool is None:
                _pool = ThreadPoolExecutor(max_workers=256, thread_name_prefix="pf")
    _pool.submit(fn)


class NonBlockingLock:
    """A test-and-set flag; held means the flag is true."""

    __slots__ = ("_flag",)

    def __init__(self, held: bool = False) -> None:
        self._flag = threading.Lock()
        if held:
            self._flag.acquire()

    def try_lock(self) -> bool:
        return self._flag.acquire(False)

    def test_and_set(self) -> bool:
        """Set the flag and return its previous value."""
        return not self._flag.acquire(False)

    def unlock(self) -> None:
        if self._flag.locked():
            self._flag.release()

    @property
    def held(self) -> bool:
        return self._flag.locked()


def try_lock(lock: NonBlockingLock) -> bool:
    return lock.try_lock()


class AtomicCounter:
    __slots__ = ("_v", "_lock")

    def __init__(self, value: int = 0) -> None:
        self._v = value
        self._lock = threading.Lock()

    def fetch_add(self, delta: int) -> int:
        with self._lock:
            v = self._v
            self._v = v + delta
            return v

    def set(self, value: int) -> None:
        with self._lock:
            self._v = value

    @property
    def value(self) -> int:
        return self._v


class ReactivationWrapper:
    """Runs ``proc`` so that runs never overlap and every reactivation is
    followed by a complete run that starts after it."""

    def __init__(
        self,
        proc: Callable[[], None],
        fork: Callable[[Callable[[], None]], None] = spawn,
        on_error: Callable[[BaseException], None] | None = None,
        log: bool = False,
    ) -> None:
        self._proc = proc
        self._fork = fork
        self._count = AtomicCounter()
        self._on_error = on_error
        self._active = AtomicCounter()
        self.reactivations = AtomicCounter()
        self.runs = 0
        self.max_overlap = 0
        self.log: list[tuple[int, int]] | None = [] if log else None

    def reactivate(self) -> None:
        self.reactivations.fetch_add(1)
        if self._count.fetch_add(1) == 0:
            self._fork(self._loop)

    def _loop(self) -> None:
        while True:
            self._count.set(1)
            self._run_once()
            if self._count.fetch_add(-1) <= 1:
                return

    def _run_once(self) -> None:
        depth = self._active.fetch_add(1) + 1
        if depth > self.max_overlap:
            self.max_overlap = depth
        start = time.perf_counter_ns()
        try:
            self.runs += 1
            self._proc()
        except BaseException as e:  # noqa: BLE001 - surfaced through on_error
            if self._on_error is None:
                raise
            self._on_error(e)
        finally:
            if self.log is not None:
                self.log.append((start, time.perf_counter_ns()))
            self._active.fetch_add(-1)

    @property
    def idle(self) -> bool:
        return self._count.value == 0


def reactivate(w: ReactivationWrapper) -> None:
    w.reactivate()


class DedicatedLock:
    """Lock for ``k`` distinct keys (0-based) with cyclic hand-off.

    With ``log=True`` every key's becoming pending and every acquisition is
    stamped in ``events`` as ``("P"|"A", key)`` in a consistent order.
    """

    def __init__(self, k: int, log: bool = False) -> None:
        self.k = k
        self._count = AtomicCounter()
        self._last = 0
        self._q: list[threading.Event | None] = [None] * k
        self._log_lock = threading.Lock() if log else None
        self.events: list[tuple[str, int]] = []
        self._holders = AtomicCounter()
        self.max_holders = 0

    def acquire(self, i: int) -> None:
        if self._count.fetch_add(1) == 0:
            self._last = i
            if self._log_lock is not None:
                with self._log_lock:
                    self.events.append(("A", i))
        else:
            ev = threading.Event()
            if self._log_lock is not None:
                with self._log_lock:
                    self._q[i] = ev
                    self.events.append(("P", i))
            else:
                self._q[i] = ev
            ev.wait()
        h = self._holders.fetch_add(1) + 1
        if h > self.max_holders:
            self.max_holders = h

    def release(self) -> None:
        self._holders.fetch_add(-1)
        if self._count.fetch_add(-1) > 1:
            j = self._last
            q = self._q
            k = self.k
            while True:
                for _ in range(k):
                    j = (j + 1) % k
                    if q[j] is not None:
                        if self._log_lock is not None:
                            with self._log_lock:
                                t = q[j]
                                q[j] = None
                                self.events.append(("A", j))
                        else:
                            t = q[j]
                            q[j] = None
                        self._last = j
                        t.set()
                        return
                time.sleep(0)

    def __enter__(self):
        raise TypeError("use acquire(key) / release()")

    def __exit__(self, *exc):
        return False


def ded_acquire(lock: DedicatedLock, key: int) -> None:
    lock.acquire(key)


def ded_release(lock: DedicatedLock) -> None:
    lock.release()


def max_bypass(events: list[tuple[str, int]]) -> int:
    """Largest number of acquisitions by one other key that a pending key
    waited through."""
    worst = 0
    pending: dict[int, dict[int, int]] = {}
    for kind, key in events:
        if kind == "P":
            pending[key] = {}
        else:
            pending.pop(key, None)
            for waiter, seen in pending.items():
                if waiter != key:
                    seen[key] = seen.get(key, 0) + 1
                    worst = max(worst, seen[key])
    return worst


class _Epoch:
    __slots__ = ("subs", "flags")

    def __init__(self, p: int, width: int) -> None:
        self.subs: list[list] = [[] for _ in range(p)]
        self.flags = [NonBlockingLock() for _ in range(width)]


class ParallelBuffer:
    """Per-slot sub-buffers under a binary tree of notification flags.

    A submit that sets the root flag notifies the owner.  ``flush`` swaps in
    a fresh epoch, then waits for submits still writing into the old one.
    """

    def __init__(self, p: int, notify: Callable[[], None]) -> None:
        self.p = max(1, p)
        width = 2
        while width < self.p:
            width *= 2
        self._width = width
        self._notify = notify
        self._epoch = _Epoch(self.p, width)
        self._y = [NonBlockingLock(held=True) for _ in range(self.p)]
        self._phi: list[threading.Event | None] = [None] * self.p
        self._slot_locks = [threading.Lock() for _ in range(self.p)]
        self.notifications = 0

    def slot_of_current(self) -> int:
        return threading.get_ident() % self.p

    def submit(self, call: Any, slot: int | None = None) -> None:
        i = self.slot_of_current() if slot is None else slot % self.p
        with self._slot_locks[i]:
            y = self._y[i]
            y.unlock()
            epoch = self._epoch
            epoch.subs[i].append(call)
            if y.test_and_set():
                phi = self._phi[i]
                if phi is not None:
                    phi.set()
        node = self._width + i
        flags = epoch.flags
        while node > 1:
            node //= 2
            if not flags[node].try_lock():
                return
        self.notifications += 1
        self._notify()

    def nonempty(self) -> bool:
        return self._epoch.flags[1].held

    def flush(self) -> Batch:
        old = self._epoch
        self._epoch = _Epoch(self.p, self._width)
        for i in range(self.p):
            ev = threading.Event()
            self._phi[i] = ev
            if not self._y[i].test_and_set():
                ev.wait()
        out: list = []
        for sub in old.subs:
            out.extend(sub)
        return Batch(out)


def buf_submit(b: ParallelBuffer, call: Any, slot: int | None = None) -> None:
    b.submit(call, slot)


def buf_flush(b: ParallelBuffer) -> Batch:
    return b.flush()
