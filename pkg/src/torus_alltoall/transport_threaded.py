"""In-process transport: one participant per thread, shared-memory wire.

Collectives rendezvous on a cyclic barrier shared by the group. An
exchange deposits every member's send region at the rendezvous and each
member then pulls its incoming units straight from the peers' regions
into its own receive region: the data is copied exactly once, and the
result cannot depend on thread scheduling because each member writes
only its own disjoint receive blocks. A closing barrier keeps members
from reusing buffers while a peer is still reading them.

This transport backs the verification suite and the default benchmark
mode. Mismatched participation simply deadlocks here (there is no wire
to time out on); :func:`run_threaded` turns a member's exception into
an abort of the whole universe so test runs fail instead of hanging.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Any, Callable

from .group import (
    CollectiveAbortedError,
    LayoutMismatchError,
    ProcessGroup,
)
from .layout import BlockSpec, RoundLayout, unit_runs
from .region import Region, copy_runs

__all__ = ["run_threaded", "threaded_group"]


class _Universe:
    """Registry of every rendezvous core created under one bootstrap.

    Needed only for failure handling: when one participant dies, every
    barrier in the universe is broken so the survivors unwind instead of
    waiting forever.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._gids = itertools.count(1)
        self._cores: list["_Core"] = []

    def new_core(self, size: int) -> "_Core":
        core = _Core(size, next(self._gids), self)
        with self._lock:
            self._cores.append(core)
        return core

    def abort(self) -> None:
        with self._lock:
            cores = list(self._cores)
        for core in cores:
            core._barrier.abort()


class _Core:
    """Shared state of one threaded group: slots plus a cyclic barrier."""

    def __init__(self, size: int, gid: int, universe: _Universe) -> None:
        self.size = size
        self.gid = gid
        self._universe = universe
        self._barrier = threading.Barrier(size)
        self._slots: list[Any] = [None] * size

    def wait(self) -> None:
        try:
            self._barrier.wait()
        except threading.BrokenBarrierError:
            raise CollectiveAbortedError(
                f"collective on group {self.gid} aborted by another member"
            ) from None

    @contextmanager
    def rendezvous(self, rank: int, value):
        """Deposit ``value``, wait for all, expose the slots, wait again.

        The closing wait guarantees no member starts the next collective
        (overwriting slots or buffers) while another is still reading.
        """
        self._slots[rank] = value
        self.wait()
        try:
            yield self._slots
        finally:
            self.wait()

    def exchange(self, rank: int, value) -> list:
        with self.rendezvous(rank, value) as slots:
            return list(slots)


class _ThreadedMember:
    """Transport endpoint of one participant; drives a shared core."""

    def __init__(self, core: _Core, rank: int) -> None:
        self._core = core
        self.rank = rank
        self.size = core.size

    @property
    def group_id(self) -> int:
        return self._core.gid

    def barrier(self) -> None:
        self._core.wait()

    def allgather(self, payload: bytes) -> list[bytes]:
        return self._core.exchange(self.rank, payload)

    def split(self, color: int, key: int) -> "_ThreadedMember":
        slots = self._core.exchange(self.rank, (color, key))
        members = sorted(
            (r for r, (c, _) in enumerate(slots) if c == color),
            key=lambda r: (slots[r][1], r),
        )
        my_rank = members.index(self.rank)
        core = self._core._universe.new_core(len(members)) if my_rank == 0 else None
        cores = self._core.exchange(self.rank, core)
        return _ThreadedMember(cores[members[0]], my_rank)

    def alltoall(self, send: Region, recv: Region, layout: RoundLayout) -> None:
        fp = layout.fingerprint()
        with self._core.rendezvous(self.rank, (fp, send)) as slots:
            for peer, (peer_fp, _) in enumerate(slots):
                if peer_fp != fp:
                    raise LayoutMismatchError(
                        f"member {peer} entered the exchange with layout {peer_fp}, "
                        f"member {self.rank} with {fp}"
                    )
            # Every peer addresses this member through the same unit index,
            # so the source run pattern is computed once.
            my_runs = unit_runs(layout, self.rank)
            for peer, (_, peer_send) in enumerate(slots):
                copy_runs(peer_send, my_runs, recv, unit_runs(layout, peer))

    def direct_alltoall(self, send: Region, recv: Region, block: BlockSpec) -> None:
        fp = (block.elems_per_block, block.elem_bytes)
        with self._core.rendezvous(self.rank, (fp, send)) as slots:
            for peer, (peer_fp, _) in enumerate(slots):
                if peer_fp != fp:
                    raise LayoutMismatchError(
                        f"member {peer} entered the exchange with blocks {peer_fp}, "
                        f"member {self.rank} with {fp}"
                    )
            if block.bytes_per_block == 0:
                return
            for peer, (_, peer_send) in enumerate(slots):
                recv.set_block(peer, peer_send.get_block(self.rank))

    def close(self) -> None:
        pass


def threaded_group(size: int) -> list[ProcessGroup]:
    """Handles for a fresh ``size``-member threaded group, one per rank.

    The caller is responsible for handing handle ``r`` to participant
    thread ``r``; :func:`run_threaded` does exactly that.
    """
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    universe = _Universe()
    core = universe.new_core(size)
    return [ProcessGroup(_ThreadedMember(core, r)) for r in range(size)]


def run_threaded(size: int, fn: Callable[..., Any], *args) -> list:
    """Run ``fn(group, *args)`` on ``size`` participant threads.

    Returns the per-rank results. If any participant raises, the whole
    universe is aborted (so no thread is left waiting at a barrier) and
    the first root-cause exception is re-raised in the caller.
    """
    groups = threaded_group(size)
    universe = groups[0]._transport._core._universe
    results: list[Any] = [None] * size
    errors: list[tuple[int, BaseException]] = []
    lock = threading.Lock()

    def body(g: ProcessGroup) -> None:
        try:
            results[g.rank] = fn(g, *args)
        except BaseException as exc:
            with lock:
                errors.append((g.rank, exc))
            universe.abort()

    threads = [
        threading.Thread(target=body, args=(g,), name=f"member-{g.rank}", daemon=True)
        for g in groups
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        # Prefer the member that actually failed over the ones it aborted.
        primary = next(
            (e for _, e in errors if not isinstance(e, CollectiveAbortedError)),
            errors[0][1],
        )
        raise primary
    return results
