"""Block-addressed byte views over exchange buffers.

A region never decides placement: layouts say which blocks move, a
region only turns ``(byte_offset, byte_length)`` runs into memoryview
slices of its underlying buffer. All deliveries into a region go
through :meth:`Region.scatter`, :meth:`Region.set_block` or
:func:`copy_runs`, which report the written byte count to the module
level :data:`copy_audit` when enabled; the zero-copy tests rely on that
to prove no extra staging happens anywhere in the engine.
"""

from __future__ import annotations

import threading
from typing import Iterable, Sequence

from .layout import BlockSpec

__all__ = ["CopyAudit", "Region", "copy_audit", "copy_runs"]


class CopyAudit:
    """Thread-safe tally of bytes written into regions.

    Disabled by default and meant for tests: enable, run one exchange,
    and compare the total against the traffic the algorithm is allowed
    to generate.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.enabled = False
        self.total_bytes = 0
        self.calls = 0

    def reset(self) -> None:
        with self._lock:
            self.total_bytes = 0
            self.calls = 0

    def record(self, nbytes: int) -> None:
        if not self.enabled:
            return
        with self._lock:
            self.total_bytes += nbytes
            self.calls += 1


copy_audit = CopyAudit()


class Region:
    """A writable buffer interpreted as ``capacity_blocks`` fixed blocks.

    The buffer may be a ``bytearray``, a contiguous 1-D numpy array, or
    anything else exposing a writable buffer protocol. The region keeps
    a reference to the original object, so numpy-backed regions stay
    valid as long as the region lives.
    """

    def __init__(self, buffer, block: BlockSpec, capacity_blocks: int | None = None) -> None:
        self.buffer = buffer
        self._mv = memoryview(buffer).cast("B")
        self.block = block
        bb = block.bytes_per_block
        if capacity_blocks is None:
            if bb == 0:
                raise ValueError("capacity_blocks is required when blocks are zero bytes")
            capacity_blocks = len(self._mv) // bb
        if capacity_blocks < 0:
            raise ValueError(f"capacity_blocks must be >= 0, got {capacity_blocks}")
        if len(self._mv) < capacity_blocks * bb:
            raise ValueError(
                f"buffer of {len(self._mv)} bytes cannot hold "
                f"{capacity_blocks} blocks of {bb} bytes"
            )
        self.capacity_blocks = capacity_blocks

    @classmethod
    def allocate(cls, nblocks: int, block: BlockSpec) -> "Region":
        """Fresh zero-filled region of ``nblocks`` blocks."""
        return cls(bytearray(nblocks * block.bytes_per_block), block, nblocks)

    @classmethod
    def from_numpy(cls, arr, elems_per_block: int, capacity_blocks: int | None = None) -> "Region":
        """Wrap a contiguous 1-D numpy array; element width from dtype."""
        if arr.ndim != 1 or not arr.flags["C_CONTIGUOUS"]:
            raise ValueError("expected a contiguous 1-D array")
        return cls(arr, BlockSpec(elems_per_block, arr.dtype.itemsize), capacity_blocks)

    @property
    def nbytes(self) -> int:
        return self.capacity_blocks * self.block.bytes_per_block

    def readonly_view(self) -> memoryview:
        """Read-only view of the region's bytes, for inspection hooks."""
        return self._mv[: self.nbytes].toreadonly()

    def get_block(self, i: int) -> bytes:
        bb = self.block.bytes_per_block
        return bytes(self._mv[i * bb : (i + 1) * bb])

    def set_block(self, i: int, data) -> None:
        bb = self.block.bytes_per_block
        if len(data) != bb:
            raise ValueError(f"block is {bb} bytes, got {len(data)}")
        self._mv[i * bb : (i + 1) * bb] = data
        copy_audit.record(bb)

    def gather(self, runs: Iterable[tuple[int, int]]) -> bytes:
        """Serialize the given byte runs into one contiguous payload."""
        return b"".join(bytes(self._mv[o : o + n]) for o, n in runs)

    def scatter(self, runs: Iterable[tuple[int, int]], data) -> None:
        """Deposit a serialized payload back into the given byte runs."""
        view = memoryview(data)
        pos = 0
        for o, n in runs:
            self._mv[o : o + n] = view[pos : pos + n]
            pos += n
        if pos != len(view):
            raise ValueError(f"payload of {len(view)} bytes does not fill runs of {pos}")
        copy_audit.record(pos)


def copy_runs(
    src: Region,
    src_runs: Sequence[tuple[int, int]],
    dst: Region,
    dst_runs: Sequence[tuple[int, int]],
) -> None:
    """Stream bytes from ``src_runs`` of ``src`` into ``dst_runs`` of ``dst``.

    The two run lists must cover the same total length but may be cut
    differently; the copy splits at every boundary. When the lists are
    congruent (the common case: a peer's unit and the mirror unit on the
    receiver differ only by a constant shift) this degenerates to one
    slice assignment per run.
    """
    total_src = sum(n for _, n in src_runs)
    total_dst = sum(n for _, n in dst_runs)
    if total_src != total_dst:
        raise ValueError(f"run length mismatch: {total_src} != {total_dst}")
    i = j = 0
    spos = dpos = 0
    smv = src._mv
    dmv = dst._mv
    while i < len(src_runs):
        so, sn = src_runs[i]
        do, dn = dst_runs[j]
        n = min(sn - spos, dn - dpos)
        dmv[do + dpos : do + dpos + n] = smv[so + spos : so + spos + n]
        spos += n
        dpos += n
        if spos == sn:
            i += 1
            spos = 0
        if dpos == dn:
            j += 1
            dpos = 0
    copy_audit.record(total_dst)
