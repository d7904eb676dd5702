"""Grid-factorized all-to-all: split once, exchange d times.

:func:`factorize_group` splits a group into one sub-group per grid
dimension and caches the result on the group handle, so the splitting
cost is paid once per (group, dims) rather than once per exchange.
:func:`alltoall_torus` then runs one layout-driven exchange per
dimension, with each round's sub-group moving whole strided units of
the current buffer. No block is ever staged, packed or reordered by a
member locally: the only engine allocation is a single scratch buffer
of ``p`` blocks per call, and buffers cycle through the rounds so that
round 0 reads the caller's send region in place and the final round
lands in the caller's receive region.

The result is identical to ``direct_alltoall`` on the parent group,
while each member talks to ``sum(D) - d`` distinct peers instead of
``p - 1``, at the price of forwarding: total blocks sent per member
grow from ``p - 1`` to ``d*p - sum(p / D[k])``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .factorization import Dims, DimsLike, as_dims, rank_to_vector, split_color_key
from .group import ProcessGroup
from .layout import BlockSpec, build_round_layout
from .region import Region

__all__ = [
    "Role",
    "TorusComm",
    "alltoall_torus",
    "buffer_schedule",
    "expected_block_traffic",
    "factorize_group",
    "has_factorization",
]

logger = logging.getLogger(__name__)

TORUS_ATTR = "torus_factorization"

RoundHook = Callable[[int, memoryview], None]
AllocHook = Callable[[int], None]


class Role(enum.Enum):
    """Which caller-visible buffer a round reads from or writes into."""

    SEND = "send"
    RECV = "recv"
    TEMP = "temp"


def buffer_schedule(d: int) -> list[tuple[Role, Role]]:
    """Per-round (read, write) buffer roles for a ``d``-round exchange.

    Round 0 always reads SEND; the writes then alternate between the
    other two buffers, phased so that the last round writes RECV. No
    round reads and writes the same buffer, and a single TEMP suffices
    for any ``d``.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    out = Role.SEND
    into = Role.RECV if d % 2 else Role.TEMP
    schedule = []
    for _ in range(d):
        schedule.append((out, into))
        if out is Role.SEND:
            out, into = (Role.RECV, Role.TEMP) if into is Role.RECV else (Role.TEMP, Role.RECV)
        else:
            out, into = into, out
    return schedule


@dataclass
class TorusComm:
    """A group factorized over grid dims, ready for torus exchanges.

    ``subgroups[i]`` contains exactly the members whose coordinates
    agree with this member's in every dimension but ``i``; this member
    sits at position ``origin[i]`` inside it.
    """

    parent: ProcessGroup
    dims: Dims
    origin: tuple[int, ...]
    subgroups: list[ProcessGroup]
    _closed: bool = field(default=False, repr=False)

    @property
    def blocks_sent(self) -> int:
        """Exchange blocks this member sent across all sub-groups."""
        return sum(g.blocks_sent for g in self.subgroups)

    @property
    def bytes_sent(self) -> int:
        return sum(g.bytes_sent for g in self.subgroups)

    def close(self) -> None:
        """Release the d sub-groups; idempotent, never touches the parent."""
        if self._closed:
            return
        self._closed = True
        for g in self.subgroups:
            g.close()
        if self.parent.attrs.get(TORUS_ATTR) is self:
            del self.parent.attrs[TORUS_ATTR]


def factorize_group(group: ProcessGroup, dims: DimsLike, *, cache: bool = True) -> TorusComm:
    """Split ``group`` into one sub-group per dimension; collective.

    The result is cached on the group handle, so later
    :func:`alltoall_torus` calls on the bare group reuse it without any
    further splitting. Factorizing the same group again replaces (and
    closes) the previous cache entry; pass ``cache=False`` to keep
    several shapes of the same group alive side by side (the caller then
    owns the returned comm's lifetime).
    """
    dims = as_dims(dims)
    if group.size != dims.p:
        raise ValueError(f"group of {group.size} cannot be shaped as {dims} (p={dims.p})")
    origin = rank_to_vector(group.rank, dims)
    subgroups = []
    for i in range(dims.d):
        color, key = split_color_key(group.rank, i, dims)
        sub = group.split(color, key)
        if sub.size != dims.factors[i] or sub.rank != origin[i]:
            raise RuntimeError(
                f"split along dimension {i} produced size {sub.size} rank {sub.rank}, "
                f"expected size {dims.factors[i]} rank {origin[i]}"
            )
        subgroups.append(sub)
    comm = TorusComm(parent=group, dims=dims, origin=origin, subgroups=subgroups)
    if cache:
        old = group.attrs.get(TORUS_ATTR)
        if old is not None:
            old.close()
        group.attrs[TORUS_ATTR] = comm
    return comm


def has_factorization(group: ProcessGroup) -> bool:
    return TORUS_ATTR in group.attrs


def expected_block_traffic(dims: DimsLike) -> int:
    """Blocks each member sends in one full torus exchange.

    Round ``k`` sends ``(D[k] - 1) * p / D[k]`` blocks, which sums to
    ``d*p - sum(p / D[k])``. With a single dimension this is ``p - 1``,
    the direct exchange cost.
    """
    dims = as_dims(dims)
    p = dims.p
    return dims.d * p - sum(p // f for f in dims.factors)


def alltoall_torus(
    target: Union[TorusComm, ProcessGroup],
    send: Region,
    recv: Region,
    block: BlockSpec,
    *,
    round_hook: Optional[RoundHook] = None,
    alloc_hook: Optional[AllocHook] = None,
) -> None:
    """Full all-to-all through the factorized grid; collective.

    After the call, block ``i`` of this member's receive region holds
    block ``rank`` of member ``i``'s send region, exactly as
    ``direct_alltoall`` would have left it. ``target`` may be a
    :class:`TorusComm` or a group carrying a cached one; a group without
    a factorization falls back to ``direct_alltoall``.

    ``round_hook(k, view)`` fires at every round boundary ``k = 0..d``
    with a read-only view of the buffer holding the data at that point
    (the send region at 0, the receive region at d). ``alloc_hook(n)``
    fires for every engine buffer allocation; there is exactly one per
    call, the ``p``-block scratch buffer.
    """
    if isinstance(target, TorusComm):
        comm = target
        if comm._closed:
            raise ValueError("TorusComm is closed")
    else:
        cached = target.attrs.get(TORUS_ATTR)
        if cached is None:
            logger.info(
                "group %s has no factorization, falling back to the direct exchange",
                target.group_id,
            )
            target.direct_alltoall(send, recv, block)
            return
        comm = cached

    dims = comm.dims
    p = dims.p
    for name, region in (("send", send), ("recv", recv)):
        if region.capacity_blocks < p:
            raise ValueError(f"{name} region holds {region.capacity_blocks} blocks, needs {p}")

    temp_bytes = p * block.bytes_per_block
    if alloc_hook is not None:
        alloc_hook(temp_bytes)
    temp = Region(bytearray(temp_bytes), block, capacity_blocks=p)

    buffers = {Role.SEND: send, Role.RECV: recv, Role.TEMP: temp}
    if round_hook is not None:
        round_hook(0, send.readonly_view())
    for k, (out, into) in enumerate(buffer_schedule(dims.d)):
        layout = build_round_layout(k, dims, block)
        comm.subgroups[k].alltoall(buffers[out], buffers[into], layout)
        if round_hook is not None:
            round_hook(k + 1, buffers[into].readonly_view())
