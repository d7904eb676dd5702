"""Self-identifying test payloads and brute-force exchange checks.

Every 32-bit element of an oracle buffer encodes where it started and
where it must end up, so any misrouted byte names itself: bits 20..31
hold the source rank, bits 8..19 the destination rank, bits 0..7 the
element's index within its block (mod 256). That caps checked exchanges
at 4096 members, far beyond desk scale.

The expected receive buffers are constructed independently of any
exchange code, and are themselves validated by the transpose identity:
stacking all members' expected buffers equals the blockwise transpose
of stacking all their send buffers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .factorization import DimsLike, as_dims, stride_table
from .layout import BlockSpec
from .region import Region

__all__ = [
    "InvariantReport",
    "VerifyReport",
    "check_round_invariant",
    "decode_tag",
    "encode_tag",
    "expected_recv",
    "recv_region",
    "send_region",
    "send_tags",
    "verify_equal",
]

TAG_DTYPE = np.dtype("<u4")
_RANK_LIMIT = 1 << 12


def encode_tag(src: int, dst: int, idx: int) -> int:
    """Pack (source rank, destination rank, element index) into 32 bits."""
    if not (0 <= src < _RANK_LIMIT and 0 <= dst < _RANK_LIMIT):
        raise ValueError(f"ranks must be < {_RANK_LIMIT}, got src={src} dst={dst}")
    return (src << 20) | (dst << 8) | (idx & 0xFF)


def decode_tag(value: int) -> tuple[int, int, int]:
    return (value >> 20) & 0xFFF, (value >> 8) & 0xFFF, value & 0xFF


def send_tags(p: int, rank: int, elems_per_block: int) -> np.ndarray:
    """The tagged send buffer of ``rank``: block ``i`` is addressed to ``i``."""
    if p > _RANK_LIMIT:
        raise ValueError(f"tagged payloads support at most {_RANK_LIMIT} members")
    dst = np.repeat(np.arange(p, dtype=np.uint32), elems_per_block)
    idx = np.tile(np.arange(elems_per_block, dtype=np.uint32) & 0xFF, p)
    return ((np.uint32(rank) << np.uint32(20)) | (dst << np.uint32(8)) | idx).astype(TAG_DTYPE)


def expected_recv(p: int, rank: int, elems_per_block: int) -> np.ndarray:
    """What ``rank`` must hold after a correct exchange of tagged buffers.

    Block ``i`` came from source ``i`` and is addressed to ``rank``;
    element indices run 0..n-1 within each block. Built directly from
    the tag definition, independent of any exchange implementation.
    """
    if p > _RANK_LIMIT:
        raise ValueError(f"tagged payloads support at most {_RANK_LIMIT} members")
    src = np.repeat(np.arange(p, dtype=np.uint32), elems_per_block)
    idx = np.tile(np.arange(elems_per_block, dtype=np.uint32) & 0xFF, p)
    return ((src << np.uint32(20)) | (np.uint32(rank) << np.uint32(8)) | idx).astype(TAG_DTYPE)


def send_region(p: int, rank: int, elems_per_block: int) -> Region:
    """Tagged send buffer of ``rank`` wrapped as a ``p``-block region."""
    return Region.from_numpy(send_tags(p, rank, elems_per_block), elems_per_block, p)


def recv_region(p: int, elems_per_block: int) -> Region:
    """Zeroed receive buffer of ``p`` blocks of 32-bit elements."""
    arr = np.zeros(p * elems_per_block, dtype=TAG_DTYPE)
    return Region.from_numpy(arr, elems_per_block, p)


@dataclass
class VerifyReport:
    """Outcome of a byte-exact buffer comparison."""

    ok: bool
    message: str = ""
    elem_index: int | None = None
    block_index: int | None = None
    expected_tag: tuple[int, int, int] | None = None
    actual_tag: tuple[int, int, int] | None = None

    def __bool__(self) -> bool:
        return self.ok


def _as_bytes(data) -> bytes:
    if isinstance(data, Region):
        return bytes(data.readonly_view())
    if isinstance(data, np.ndarray):
        return data.tobytes()
    return bytes(data)


def verify_equal(actual, expected, elems_per_block: int | None = None) -> VerifyReport:
    """Byte-exact comparison with a decoded first-mismatch report.

    ``actual`` and ``expected`` may be regions, numpy arrays or raw
    bytes. When ``elems_per_block`` is given, the first differing 32-bit
    element is located and both tags are decoded into the report.
    """
    a = _as_bytes(actual)
    e = _as_bytes(expected)
    if a == e:
        return VerifyReport(ok=True, message="buffers identical")
    if len(a) != len(e):
        return VerifyReport(ok=False, message=f"length mismatch: {len(a)} != {len(e)} bytes")
    av = np.frombuffer(a, dtype=TAG_DTYPE)
    ev = np.frombuffer(e, dtype=TAG_DTYPE)
    i = int(np.flatnonzero(av != ev)[0])
    blk = i // elems_per_block if elems_per_block else None
    exp_tag = decode_tag(int(ev[i]))
    act_tag = decode_tag(int(av[i]))
    return VerifyReport(
        ok=False,
        elem_index=i,
        block_index=blk,
        expected_tag=exp_tag,
        actual_tag=act_tag,
        message=(
            f"element {i}"
            + (f" (block {blk})" if blk is not None else "")
            + f": expected src={exp_tag[0]} dst={exp_tag[1]} idx={exp_tag[2]},"
            + f" got src={act_tag[0]} dst={act_tag[1]} idx={act_tag[2]}"
        ),
    )


@dataclass
class InvariantReport:
    ok: bool
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def check_round_invariant(
    k: int, dims: DimsLike, origin: tuple[int, ...], data, block: BlockSpec
) -> InvariantReport:
    """Verify the data a member must hold at round boundary ``k``.

    Before round ``k``, a member with coordinates ``origin`` holds
    exactly one block for every (source, destination) pair where the
    source agrees with ``origin`` in dimensions ``k..d-1`` (free below)
    and the destination agrees in dimensions ``0..k-1`` (free above).
    At ``k = 0`` that is the member's own send buffer; at ``k = d`` the
    fully delivered receive buffer. ``data`` is the raw byte view of the
    tagged buffer, as handed to the engine's round hook.
    """
    dims = as_dims(dims)
    p = dims.p
    epb = block.elems_per_block
    if block.elem_bytes != TAG_DTYPE.itemsize:
        raise ValueError("round invariant checks need 32-bit tagged elements")
    if epb == 0:
        return InvariantReport(True, "no data to check")
    if not 0 <= k <= dims.d:
        raise ValueError(f"boundary {k} out of range for d={dims.d}")

    tags = np.frombuffer(bytes(data), dtype=TAG_DTYPE).reshape(p, epb)[:, 0]
    observed = sorted(zip(
        ((tags >> np.uint32(20)) & np.uint32(0xFFF)).tolist(),
        ((tags >> np.uint32(8)) & np.uint32(0xFFF)).tolist(),
    ))

    strides = stride_table(dims)
    ranks = np.arange(p)
    src_mask = np.ones(p, dtype=bool)
    dst_mask = np.ones(p, dtype=bool)
    for i in range(dims.d):
        digit = (ranks // strides[i]) % dims.factors[i]
        if i >= k:
            src_mask &= digit == origin[i]
        else:
            dst_mask &= digit == origin[i]
    sources = ranks[src_mask].tolist()
    dests = ranks[dst_mask].tolist()
    expected = sorted((s, t) for s in sources for t in dests)

    if observed == expected:
        return InvariantReport(True, f"boundary {k}: {len(sources)}x{len(dests)} pairs present")
    missing = sorted(set(expected) - set(observed))[:4]
    surplus = sorted(set(observed) - set(expected))[:4]
    return InvariantReport(
        False,
        f"boundary {k} at origin {origin}: missing pairs {missing}, unexpected {surplus}",
    )
