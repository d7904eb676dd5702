"""
Same exchange, real processes
=============================

Spawns six local processes wired over loopback TCP and runs the 3x2
factorized exchange. The worker must live at module level so the spawn
start method can import it.
"""

from torus_alltoall import BlockSpec, alltoall_torus, factorize_group, verify_equal
from torus_alltoall import oracle
from torus_alltoall.transport_tcp import run_local_cluster

P = 6
DIMS = (3, 2)
ELEMS = 8


def member(group):
    block = BlockSpec(ELEMS, 4)
    send = oracle.send_region(P, group.rank, ELEMS)
    recv = oracle.recv_region(P, ELEMS)
    comm = factorize_group(group, DIMS)
    alltoall_torus(comm, send, recv, block)
    report = verify_equal(recv, oracle.expected_recv(P, group.rank, ELEMS), ELEMS)
    return report.ok, comm.blocks_sent, comm.bytes_sent


if __name__ == "__main__":
    results = run_local_cluster(P, member)
    assert all(ok for ok, _, _ in results)
    blocks, nbytes = results[0][1], results[0][2]
    print(f"{P} processes over TCP, grid {'x'.join(map(str, DIMS))}: all verified")
    print(f"blocks sent per member: {blocks}, payload bytes: {nbytes}")
