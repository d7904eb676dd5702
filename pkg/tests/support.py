"""Independent reference implementations and shared fixtures.

Everything here is deliberately brute force and shares no code paths
with the library: layout enumeration by digit sorting, factorization
search by full enumeration. Used to cross-check the closed-form
implementations. Worker functions for multi-process transport tests
live at module level so they survive spawn pickling.
"""

from __future__ import annotations

import math

from torus_alltoall import (
    BlockSpec,
    alltoall_torus,
    factorize_group,
    verify_equal,
)
from torus_alltoall import oracle


def brute_digits(rank: int, factors) -> tuple[int, ...]:
    """Mixed-radix digits of rank, dimension 0 varying fastest."""
    digits = []
    for f in factors:
        digits.append(rank % f)
        rank //= f
    return tuple(digits)


def brute_unit_offsets(factors, k: int, j: int) -> list[int]:
    """Unit j of round k by sorting block indices on their digits.

    A block index belongs to unit j iff its digit k equals j. Within the
    unit, order is lexicographic on (digits above k, index mod sigma(k)),
    the first outer digit most significant.
    """
    p = math.prod(factors)
    sigma_k = math.prod(factors[:k])
    members = [i for i in range(p) if brute_digits(i, factors)[k] == j]
    members.sort(key=lambda i: (brute_digits(i, factors)[k + 1:], i % sigma_k))
    return members


def brute_factorizations(p: int) -> set[tuple[int, ...]]:
    """All ordered tuples of factors >= 2 with the given product."""
    if p < 2:
        return set()
    out = {(p,)}
    for head in range(2, p):
        if p % head == 0:
            out.update((head,) + tail for tail in brute_factorizations(p // head))
    return out


def brute_lexmin_dims(p: int, d: int) -> tuple[int, ...]:
    """Best factorization by scoring every candidate of length d."""
    candidates = [f for f in brute_factorizations(p) if len(f) == d]
    if not candidates:
        raise ValueError(f"{p} has no factorization into {d} factors >= 2")
    best = min(candidates, key=lambda f: tuple(sorted(f, reverse=True)))
    return tuple(sorted(best, reverse=True))


# -- golden index tables, frozen by hand from the offset formula ------------
# Three printed reference tables for these shapes circulate with a few
# bad entries; every literal below was recomputed independently, and
# brute_unit_offsets re-derives them all in the tests.

GOLD_5x4 = {
    0: {
        0: [0, 5, 10, 15],
        1: [1, 6, 11, 16],
        2: [2, 7, 12, 17],
        3: [3, 8, 13, 18],
        4: [4, 9, 14, 19],
    },
    1: {
        0: [0, 1, 2, 3, 4],
        1: [5, 6, 7, 8, 9],
        2: [10, 11, 12, 13, 14],
        3: [15, 16, 17, 18, 19],
    },
}

GOLD_2x3x4 = {
    0: {
        0: [0, 6, 12, 18, 2, 8, 14, 20, 4, 10, 16, 22],
        1: [1, 7, 13, 19, 3, 9, 15, 21, 5, 11, 17, 23],
    },
    1: {
        0: [0, 1, 6, 7, 12, 13, 18, 19],
        1: [2, 3, 8, 9, 14, 15, 20, 21],
        2: [4, 5, 10, 11, 16, 17, 22, 23],
    },
    2: {
        0: [0, 1, 2, 3, 4, 5],
        1: [6, 7, 8, 9, 10, 11],
        2: [12, 13, 14, 15, 16, 17],
        3: [18, 19, 20, 21, 22, 23],
    },
}

# For the 144-block shape only boundary fragments are frozen literally;
# the elided middles come from brute_unit_offsets.
GOLD_4x3x3x4_FRAGMENTS = {
    (0, 0): ([0, 36, 72, 108, 12], [32, 68, 104, 140]),
    (0, 1): ([1, 37, 73, 109, 13], [33, 69, 105, 141]),
    (0, 2): ([2, 38, 74, 110, 14], [34, 70, 106, 142]),
    (0, 3): ([3, 39, 75, 111, 15], [35, 71, 107, 143]),
    (1, 0): ([0, 1, 2, 3, 36, 37, 38, 39], [132, 133, 134, 135]),
    (1, 1): ([4, 5, 6, 7, 40, 41, 42, 43], [136, 137, 138, 139]),
    (1, 2): ([8, 9, 10, 11, 44, 45, 46, 47], [140, 141, 142, 143]),
    (2, 0): (list(range(12)) + [36], [117, 118, 119]),
    (2, 1): (list(range(12, 24)) + [48], [129, 130, 131]),
    (2, 2): (list(range(24, 36)) + [60], [141, 142, 143]),
    (3, 0): (list(range(0, 9)), [33, 34, 35]),
    (3, 1): (list(range(36, 45)), [69, 70, 71]),
    (3, 2): (list(range(72, 81)), [105, 106, 107]),
    (3, 3): (list(range(108, 117)), [141, 142, 143]),
}

GOLD_4x3x3x4_K1_UNIT0 = [
    0, 1, 2, 3, 36, 37, 38, 39, 72, 73, 74, 75, 108, 109, 110, 111,
    12, 13, 14, 15, 48, 49, 50, 51, 84, 85, 86, 87, 120, 121, 122, 123,
    24, 25, 26, 27, 60, 61, 62, 63, 96, 97, 98, 99, 132, 133, 134, 135,
]


# -- spawn-safe workers for multi-process transport tests -------------------


def tcp_collectives_worker(group):
    """Exercise allgather, barrier, and a parity split; returns evidence."""
    gathered = group.allgather(bytes([group.rank]) * (group.rank + 1))
    group.barrier()
    sub = group.split(color=group.rank % 2, key=group.rank)
    sub_ranks = sub.allgather(bytes([group.rank]))
    sub.barrier()
    result = (
        [g.decode("latin1") for g in gathered],
        sub.rank,
        sub.size,
        [s[0] for s in sub_ranks],
    )
    sub.close()
    return result


def tcp_exchange_worker(group, dims, elems):
    """Direct and factorized tagged exchanges; returns bytes + verdicts."""
    p = group.size
    block = BlockSpec(elems, 4)
    send = oracle.send_region(p, group.rank, elems)
    recv_direct = oracle.recv_region(p, elems)
    recv_torus = oracle.recv_region(p, elems)
    group.direct_alltoall(send, recv_direct, block)
    comm = factorize_group(group, dims)
    before = comm.blocks_sent
    alltoall_torus(comm, send, recv_torus, block)
    sent = comm.blocks_sent - before
    ok_direct = bool(
        verify_equal(recv_direct, oracle.expected_recv(p, group.rank, elems), elems)
    )
    return (
        bytes(recv_torus.readonly_view()),
        bytes(recv_direct.readonly_view()),
        ok_direct,
        sent,
    )


def tagged_exchange_bytes(group, dims, elems):
    """Factorized exchange only; returns the raw received bytes."""
    p = group.size
    block = BlockSpec(elems, 4)
    send = oracle.send_region(p, group.rank, elems)
    recv = oracle.recv_region(p, elems)
    comm = factorize_group(group, dims)
    alltoall_torus(comm, send, recv, block)
    return bytes(recv.readonly_view())
