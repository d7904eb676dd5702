"""
The factorized all-to-all, verified
===================================

Runs 24 in-process members through a 2x3x4 grid and checks three things:
the result is byte-identical to the direct exchange, every member sent
exactly d*p - sum(p/D[k]) blocks, and the data each member holds at
every round boundary matches the source/destination invariant.
"""

from torus_alltoall import (
    BlockSpec,
    alltoall_torus,
    check_round_invariant,
    expected_block_traffic,
    factorize_group,
    verify_equal,
)
from torus_alltoall import oracle
from torus_alltoall.transport_threaded import run_threaded

DIMS = (2, 3, 4)
P = 24
ELEMS = 4  # 32-bit elements per block


def member(group):
    block = BlockSpec(ELEMS, 4)
    send = oracle.send_region(P, group.rank, ELEMS)
    recv_direct = oracle.recv_region(P, ELEMS)
    recv_torus = oracle.recv_region(P, ELEMS)

    group.direct_alltoall(send, recv_direct, block)

    comm = factorize_group(group, DIMS)
    boundaries = []

    def watch(k, view):
        report = check_round_invariant(k, DIMS, comm.origin, view, block)
        boundaries.append((k, report.ok))

    alltoall_torus(comm, send, recv_torus, block, round_hook=watch)

    same = verify_equal(recv_torus, recv_direct, ELEMS)
    return same.ok, comm.blocks_sent, boundaries


results = run_threaded(P, member)

assert all(ok for ok, _, _ in results), "factorized result differs from direct"
want = expected_block_traffic(DIMS)
assert all(sent == want for _, sent, _ in results)
assert all(ok for _, _, bounds in results for _, ok in bounds)

print(f"{P} members on a {'x'.join(map(str, DIMS))} grid")
print(f"direct == torus on every member, {ELEMS} elements per block")
print(f"blocks sent per member: {results[0][1]} (law says {want}, direct would be {P - 1})")
print(f"round boundaries checked per member: {len(results[0][2])}, all clean")
