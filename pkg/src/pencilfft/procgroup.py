"""Process groups and blocking all-to-all collectives.

The transform code only talks to :class:`Group`.  The bundled backend,
:class:`Harness`, runs every rank as a thread of the current process and
realizes each collective through a shared rendezvous: all members deposit
their send buffers, meet at a barrier, copy out what is addressed to them
and meet again before the slot can be reused.  A real network backend would
implement the same two methods.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .decomp import ProcGrid

__all__ = [
    "CollectiveError",
    "CollectiveTimeout",
    "ExchangePlan",
    "Group",
    "SelfGroup",
    "Harness",
    "split",
]

DEFAULT_TIMEOUT = 60.0


class CollectiveError(RuntimeError):
    """Members of a collective disagree on its arguments."""


class CollectiveTimeout(CollectiveError):
    """A member never arrived at a collective."""


@dataclass(frozen=True)
class ExchangePlan:
    """Per-peer element counts and displacements for one member."""

    send_counts: tuple[int, ...]
    send_displs: tuple[int, ...]
    recv_counts: tuple[int, ...]
    recv_displs: tuple[int, ...]

    @classmethod
    def from_counts(cls, send_counts: Sequence[int], recv_counts: Sequence[int]):
        def displs(counts):
            return tuple(int(d) for d in np.concatenate(([0], np.cumsum(counts)[:-1])))

        send_counts = tuple(int(c) for c in send_counts)
        recv_counts = tuple(int(c) for c in recv_counts)
        return cls(send_counts, displs(send_counts), recv_counts, displs(recv_counts))

    @property
    def send_total(self) -> int:
        return sum(self.send_counts)

    @property
    def recv_total(self) -> int:
        return sum(self.recv_counts)

    def check(self, size: int):
        for name in ("send_counts", "send_displs", "recv_counts", "recv_displs"):
            if len(getattr(self, name)) != size:
                raise CollectiveError(f"{name} has {len(getattr(self, name))} entries, group has {size}")
        for counts, displs in ((self.send_counts, self.send_displs),
                               (self.recv_counts, self.recv_displs)):
            spans = sorted((d, d + c) for c, d in zip(counts, displs) if c)
            if any(c < 0 or d < 0 for c, d in zip(counts, displs)):
                raise CollectiveError("negative count or displacement")
            for (_, end), (start, _) in zip(spans, spans[1:]):
                if start < end:
                    raise CollectiveError("overlapping buffer regions in exchange plan")


class Group:
    """One member's handle on a group of ranks."""

    size: int
    index: int

    def alltoall_even(self, send: np.ndarray, block: int) -> np.ndarray:
        raise NotImplementedError

    def alltoall_varying(self, send: np.ndarray, plan: ExchangePlan) -> np.ndarray:
        raise NotImplementedError

    def barrier(self):
        raise NotImplementedError


def _check_even(send, size, block):
    if block < 0:
        raise CollectiveError(f"negative block size {block}")
    if send.ndim != 1 or send.size != size * block:
        raise CollectiveError(
            f"send buffer of {send.size} elements, expected {size} x {block}")


class SelfGroup(Group):
    """Trivial group of one rank; exchanges are local copies."""

    size = 1
    index = 0

    def alltoall_even(self, send, block):
        send = np.asarray(send)
        _check_even(send, 1, block)
        return send.copy()

    def alltoall_varying(self, send, plan):
        send = np.asarray(send)
        plan.check(1)
        if plan.send_counts != plan.recv_counts:
            raise CollectiveError("single-member plan must send what it receives")
        out = np.empty(plan.recv_total, dtype=send.dtype)
        c = plan.send_counts[0]
        out[plan.recv_displs[0]:plan.recv_displs[0] + c] = send[plan.send_displs[0]:plan.send_displs[0] + c]
        return out

    def barrier(self):
        pass


class _Rendezvous:
    """Shared state for one group; every member holds the same instance."""

    def __init__(self, members: tuple[int, ...], timeout: float):
        self.members = members
        self.timeout = timeout
        self.slots: list = [None] * len(members)
        self._barrier = threading.Barrier(len(members))

    def wait(self, what: str):
        try:
            self._barrier.wait(self.timeout)
        except threading.BrokenBarrierError:
            raise CollectiveTimeout(
                f"{what}: not all of ranks {list(self.members)} arrived within "
                f"{self.timeout:g} s") from None


class _HarnessGroup(Group):
    def __init__(self, rendezvous: _Rendezvous, index: int):
        self._rv = rendezvous
        self.size = len(rendezvous.members)
        self.index = index

    @property
    def members(self) -> tuple[int, ...]:
        return self._rv.members

    def barrier(self):
        self._rv.wait("barrier")

    def _collect(self, what, payload):
        rv = self._rv
        rv.slots[self.index] = payload
        rv.wait(what)
        return list(rv.slots)

    def _release(self, what):
        self._rv.wait(what)

    def alltoall_even(self, send, block):
        send = np.ascontiguousarray(send)
        slots = self._collect("alltoall_even", (send, block))
        try:
            blocks = {b for _, b in slots}
            if len(blocks) != 1:
                raise CollectiveError(f"alltoall_even called with differing blocks {sorted(blocks)}")
            for s, _ in slots:
                _check_even(s, self.size, block)
            me = self.index
            recv = np.empty(self.size * block, dtype=send.dtype)
            for j, (s, _) in enumerate(slots):
                recv[j * block:(j + 1) * block] = s[me * block:(me + 1) * block]
        finally:
            self._release("alltoall_even")
        return recv

    def alltoall_varying(self, send, plan):
        send = np.ascontiguousarray(send)
        slots = self._collect("alltoall_varying", (send, plan))
        try:
            me = self.index
            for j, (s, p) in enumerate(slots):
                p.check(self.size)
                if max((d + c for c, d in zip(p.send_counts, p.send_displs)), default=0) > s.size:
                    raise CollectiveError(f"member {j} send buffer too small for its plan")
            for i, (_, pi) in enumerate(slots):
                for j, (_, pj) in enumerate(slots):
                    if pi.send_counts[j] != pj.recv_counts[i]:
                        raise CollectiveError(
                            f"member {i} sends {pi.send_counts[j]} elements to {j}, "
                            f"which expects {pj.recv_counts[i]}")
            recv = np.empty(plan.recv_total, dtype=send.dtype)
            for j, (s, p) in enumerate(slots):
                c = p.send_counts[me]
                src = p.send_displs[me]
                dst = plan.recv_displs[j]
                recv[dst:dst + c] = s[src:src + c]
        finally:
            self._release("alltoall_varying")
        return recv


class Harness:
    """In-process world of ``nranks`` ranks, each run on its own thread."""

    def __init__(self, nranks: int, timeout: float = DEFAULT_TIMEOUT):
        if nranks < 1:
            raise ValueError(f"need at least one rank, got {nranks}")
        self.nranks = nranks
        self.timeout = timeout
        self._lock = threading.Lock()
        self._registry: dict = {}

    def _rendezvous(self, key, members) -> _Rendezvous:
        with self._lock:
            rv = self._registry.get(key)
            if rv is None:
                rv = self._registry[key] = _Rendezvous(tuple(members), self.timeout)
            return rv

    def group(self, rank: int, members: Sequence[int], tag=None) -> Group:
        """Handle for ``rank`` on the group formed by ``members`` (in order)."""
        members = tuple(members)
        if rank not in members:
            raise ValueError(f"rank {rank} not in group {members}")
        return _HarnessGroup(self._rendezvous((tag, members), members), members.index(rank))

    def world(self, rank: int) -> "WorldGroup":
        return WorldGroup(self, rank)

    def run(self, fn: Callable, *args, **kwargs) -> list:
        """Call ``fn(world_group, *args, **kwargs)`` on every rank; return per-rank results.

        The first exception raised by any rank is re-raised after all threads
        have finished or timed out.
        """
        results = [None] * self.nranks
        errors: list = [None] * self.nranks

        def target(rank):
            try:
                results[rank] = fn(self.world(rank), *args, **kwargs)
            except BaseException as exc:  # noqa: BLE001 - re-raised below
                errors[rank] = exc
                # free peers blocked in collectives
                with self._lock:
                    for rv in self._registry.values():
                        rv._barrier.abort()

        if self.nranks == 1:
            target(0)
        else:
            threads = [threading.Thread(target=target, args=(r,), name=f"rank-{r}")
                       for r in range(self.nranks)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        # the originating failure is preferred over timeouts it caused
        primary = [e for e in errors if e is not None and not isinstance(e, CollectiveTimeout)]
        failed = primary or [e for e in errors if e is not None]
        if failed:
            # a new world is needed after an aborted collective
            self._registry.clear()
            raise failed[0]
        return results


class WorldGroup(_HarnessGroup):
    """All ranks of a :class:`Harness`, indexed by rank."""

    def __init__(self, harness: Harness, rank: int):
        members = tuple(range(harness.nranks))
        super().__init__(harness._rendezvous(("world", members), members), rank)
        self.harness = harness

    @property
    def rank(self) -> int:
        return self.index


def split(world: Group, pg: ProcGrid) -> tuple[Group, Group]:
    """ROW and COLUMN subgroups of ``world`` for processor grid ``pg``.

    The ROW group holds the ``m1`` ranks sharing this rank's column
    coordinate; the COLUMN group the ``m2`` ranks sharing its row coordinate.
    Members are indexed by their coordinate along the group.
    """
    if world.size != pg.size:
        raise ValueError(f"world has {world.size} ranks, processor grid {pg} needs {pg.size}")
    if isinstance(world, SelfGroup) or world.size == 1:
        return SelfGroup(), SelfGroup()
    if not isinstance(world, WorldGroup):
        raise TypeError(f"cannot split {type(world).__name__}")
    rank = world.rank
    row = world.harness.group(rank, pg.row_members(rank), tag=("row", pg.m1, pg.m2))
    col = world.harness.group(rank, pg.col_members(rank), tag=("col", pg.m1, pg.m2))
    return row, col
