"""Rank-addressed collective endpoints over pluggable transports.

A :class:`ProcessGroup` is one participant's handle on a communication
group: it knows its own rank, the group size, and how to run the
group's collectives through whatever transport backs it (in-process
threads or TCP sockets). Handles are not shared between participants;
each member calls the same collective on its own handle, and the call
returns only once the whole group has taken part.

Collectives must be entered by every member in the same order. A member
that skips one deadlocks the threaded transport (no wire, nothing can
time out) and raises :class:`ProtocolError` on the TCP transport once
the socket timeout expires.
"""

from __future__ import annotations

from .layout import BlockSpec, RoundLayout
from .region import Region

__all__ = [
    "CollectiveAbortedError",
    "LayoutMismatchError",
    "ProcessGroup",
    "ProtocolError",
    "TransportError",
]


class TransportError(RuntimeError):
    """A collective could not complete."""


class CollectiveAbortedError(TransportError):
    """Another member failed, tearing down the rendezvous this member was in."""


class ProtocolError(TransportError):
    """Wire-level failure: framing mismatch, timeout, or a dropped peer."""

    def __init__(self, message: str, peer: int | None = None):
        super().__init__(message)
        self.peer = peer


class LayoutMismatchError(TransportError):
    """Members entered one exchange with structurally different layouts."""


def _regions_distinct(a: Region, b: Region) -> bool:
    if a.buffer is b.buffer:
        return False
    try:
        import numpy as np

        if isinstance(a.buffer, np.ndarray) and isinstance(b.buffer, np.ndarray):
            return not np.shares_memory(a.buffer, b.buffer)
    except ImportError:  # pragma: no cover
        pass
    return True


class ProcessGroup:
    """One member's endpoint in a group of ``size`` participants.

    Attributes
    ----------
    blocks_sent, bytes_sent : int
        Monotone counters of exchange payload this member has sent
        (control traffic such as splits and barriers is not counted).
    attrs : dict
        Cache attached to the handle. Values exposing ``close()`` are
        closed when the group is closed.
    """

    def __init__(self, transport) -> None:
        self._transport = transport
        self.blocks_sent = 0
        self.bytes_sent = 0
        self.attrs: dict = {}
        self._closed = False

    @property
    def rank(self) -> int:
        return self._transport.rank

    @property
    def size(self) -> int:
        return self._transport.size

    @property
    def group_id(self) -> int:
        return self._transport.group_id

    def __repr__(self) -> str:
        return (
            f"<ProcessGroup id={self.group_id} rank={self.rank}/{self.size} "
            f"via {type(self._transport).__name__}>"
        )

    # -- collectives ---------------------------------------------------

    def split(self, color: int, key: int) -> "ProcessGroup":
        """Partition the group by ``color``; collective.

        Every member passes a color and a key and receives a handle on
        the group of members that passed the same color, ranked by
        ascending key with ties broken by parent rank. The child group
        is fully independent of the parent.
        """
        return ProcessGroup(self._transport.split(int(color), int(key)))

    def barrier(self) -> None:
        """Block until every member has entered; collective."""
        self._transport.barrier()

    def allgather(self, payload: bytes) -> list[bytes]:
        """Exchange one small payload per member; collective.

        Returns the payloads indexed by rank. Intended for control data
        (split bookkeeping, benchmark timings), not bulk transfer.
        """
        return self._transport.allgather(bytes(payload))

    def alltoall(self, send: Region, recv: Region, layout: RoundLayout) -> None:
        """Exchange one layout unit with every member; collective.

        The byte stream serialized from this member's unit ``b`` lands
        in member ``b``'s receive region as unit ``rank``, and vice
        versa; the pairing with itself is a local copy. All members must
        pass structurally equal layouts with ``unit_count == size``, and
        each region must hold at least ``layout.dims.p`` blocks.
        """
        if layout.unit_count != self.size:
            raise ValueError(
                f"layout has {layout.unit_count} units, group has {self.size} members"
            )
        p = layout.dims.p
        for name, region in (("send", send), ("recv", recv)):
            if region.capacity_blocks < p:
                raise ValueError(
                    f"{name} region holds {region.capacity_blocks} blocks, needs {p}"
                )
            if region.block != layout.block:
                raise ValueError(f"{name} region block spec differs from the layout's")
        if not _regions_distinct(send, recv):
            raise ValueError("send and recv regions must not overlap")
        self._transport.alltoall(send, recv, layout)
        bb = layout.block.bytes_per_block
        if bb:
            units = self.size - 1
            self.blocks_sent += units * layout.blocks_per_unit
            self.bytes_sent += units * layout.blocks_per_unit * bb

    def direct_alltoall(self, send: Region, recv: Region, block: BlockSpec) -> None:
        """Plain block exchange; collective.

        Block ``i`` of this member's send region becomes block ``rank``
        of member ``i``'s receive region. This is the reference path:
        the factorized exchange must reproduce its result byte for byte,
        and it doubles as the fallback when a group was never factorized.
        """
        for name, region in (("send", send), ("recv", recv)):
            if region.capacity_blocks < self.size:
                raise ValueError(
                    f"{name} region holds {region.capacity_blocks} blocks, needs {self.size}"
                )
            if region.block != block:
                raise ValueError(f"{name} region block spec differs from the argument")
        if not _regions_distinct(send, recv):
            raise ValueError("send and recv regions must not overlap")
        self._transport.direct_alltoall(send, recv, block)
        if block.bytes_per_block:
            self.blocks_sent += self.size - 1
            self.bytes_sent += (self.size - 1) * block.bytes_per_block

    # -- lifecycle -----------------------------------------------------

    def close(self) -> None:
        """Release cached attributes and transport resources; idempotent."""
        if self._closed:
            return
        self._closed = True
        for value in list(self.attrs.values()):
            closer = getattr(value, "close", None)
            if callable(closer):
                closer()
        self.attrs.clear()
        self._transport.close()

    def __enter__(self) -> "ProcessGroup":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
