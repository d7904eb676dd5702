"""Strided block layouts for one exchange round.

For round ``k`` over grid dims ``D``, the ``p``-block buffer is read as
``D[k]`` per-peer units. Unit ``j`` starts at block ``j * sigma[k]``
(``sigma`` being the stride table) and consists of contiguous segments
of ``sigma[k]`` blocks, one segment per combination of the indices of
dimensions above ``k``, each index stepping by its own table stride.
The units tile the ``p`` blocks exactly once. Sender and receiver both
serialize a unit in the same enumeration order (dimension ``k+1``
slowest, dimension ``d-1`` fastest, segment offset innermost), which is
what lets one side's bytes land meaningfully on the other side without
any intermediate reordering.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .factorization import Dims, DimsLike, as_dims, stride_table

__all__ = [
    "BlockSpec",
    "RoundLayout",
    "build_round_layout",
    "unit_offsets",
    "unit_runs",
]


@dataclass(frozen=True)
class BlockSpec:
    """Element count and element width of one buffer block."""

    elems_per_block: int
    elem_bytes: int

    def __post_init__(self) -> None:
        if self.elems_per_block < 0:
            raise ValueError(f"elems_per_block must be >= 0, got {self.elems_per_block}")
        if self.elem_bytes < 1:
            raise ValueError(f"elem_bytes must be >= 1, got {self.elem_bytes}")

    @property
    def bytes_per_block(self) -> int:
        return self.elems_per_block * self.elem_bytes


@dataclass(frozen=True)
class RoundLayout:
    """Placement of every peer's unit within a ``p``-block buffer.

    ``outer_dims`` holds ``(count, stride_blocks)`` for each dimension
    above ``k`` in ascending dimension order; ``unit_extent_blocks`` and
    ``seg_len_blocks`` both equal ``sigma[k]``, so the first offset of
    unit ``j`` is ``j * sigma[k]`` (the layout is self-describing).
    """

    k: int
    dims: Dims
    strides: tuple[int, ...]
    block: BlockSpec
    unit_count: int
    unit_extent_blocks: int
    seg_len_blocks: int
    outer_dims: tuple[tuple[int, int], ...]

    @property
    def blocks_per_unit(self) -> int:
        return self.dims.p // self.unit_count

    def fingerprint(self) -> tuple:
        """Structural identity used to compare layouts across members."""
        return (
            self.k,
            self.dims.factors,
            self.block.elems_per_block,
            self.block.elem_bytes,
        )


def build_round_layout(k: int, dims: DimsLike, block: BlockSpec) -> RoundLayout:
    """Layout of round ``k`` for a buffer of ``dims.p`` blocks."""
    dims = as_dims(dims)
    if not 0 <= k < dims.d:
        raise ValueError(f"round {k} out of range for d={dims.d}")
    strides = stride_table(dims)
    return RoundLayout(
        k=k,
        dims=dims,
        strides=strides,
        block=block,
        unit_count=dims.factors[k],
        unit_extent_blocks=strides[k],
        seg_len_blocks=strides[k],
        outer_dims=tuple((dims.factors[i], strides[i]) for i in range(k + 1, dims.d)),
    )


def unit_offsets(layout: RoundLayout, j: int) -> list[int]:
    """Block offsets of unit ``j`` in serialization order.

    The offsets are ``j * sigma[k] + sum(c_i * sigma[i]) + t`` for every
    combination of outer indices ``c_i`` and segment offset
    ``t < sigma[k]``, enumerated with the highest dimension's index
    varying fastest among the outer indices and ``t`` innermost.
    """
    if not 0 <= j < layout.unit_count:
        raise ValueError(f"unit {j} out of range for unit_count={layout.unit_count}")
    base = j * layout.unit_extent_blocks
    seg = layout.seg_len_blocks
    offsets: list[int] = []
    for combo in itertools.product(*(range(c) for c, _ in layout.outer_dims)):
        start = base + sum(c * s for c, (_, s) in zip(combo, layout.outer_dims))
        offsets.extend(range(start, start + seg))
    return offsets


def unit_runs(layout: RoundLayout, j: int) -> list[tuple[int, int]]:
    """Unit ``j`` as coalesced ``(byte_offset, byte_length)`` runs.

    Adjacent blocks in serialization order merge into a single run, so
    the final round (fully contiguous units) yields exactly one run and
    zero-byte blocks yield no runs at all. Total run length is always
    ``blocks_per_unit * bytes_per_block``.
    """
    bb = layout.block.bytes_per_block
    if bb == 0:
        return []
    runs: list[tuple[int, int]] = []
    start = -1
    end = -1
    for off in unit_offsets(layout, j):
        if off == end:
            end += 1
            continue
        if start >= 0:
            runs.append((start * bb, (end - start) * bb))
        start = off
        end = off + 1
    if start >= 0:
        runs.append((start * bb, (end - start) * bb))
    return runs
