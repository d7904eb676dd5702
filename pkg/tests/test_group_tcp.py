import socket
import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from torus_alltoall.group import ProtocolError
from torus_alltoall.transport_tcp import (
    GLOBAL_GROUP_ID,
    MAGIC,
    _child_gid,
    _Conn,
    _pack_table,
    _unpack_table,
    run_local_cluster,
)

from support import tcp_collectives_worker, tcp_exchange_worker

pytestmark = pytest.mark.tcp


def test_collectives_over_processes():
    res = run_local_cluster(4, tcp_collectives_worker)
    for rank, (gathered, sub_rank, sub_size, sub_members) in enumerate(res):
        assert gathered == [chr(r) * (r + 1) for r in range(4)]
        assert sub_size == 2
        assert sub_members == ([0, 2] if rank % 2 == 0 else [1, 3])
        assert sub_rank == sub_members.index(rank)


def test_exchange_over_processes():
    p, elems = 6, 5
    res = run_local_cluster(p, tcp_exchange_worker, args=((3, 2), elems))
    want_traffic = 2 * p - (p // 3 + p // 2)
    for rank, (torus_bytes, direct_bytes, ok_direct, sent) in enumerate(res):
        assert ok_direct
        assert torus_bytes == direct_bytes
        assert sent == want_traffic


def test_cluster_propagates_worker_failure():
    with pytest.raises(Exception, match="failure at member 1"):
        run_local_cluster(2, _failing_worker)


def _failing_worker(group):
    if group.rank == 1:
        raise RuntimeError(f"failure at member {group.rank}")
    group.barrier()


# -- wire format -------------------------------------------------------------


def _conn_pair(timeout=5.0):
    a, b = socket.socketpair()
    return _Conn(a, peer=1, timeout=timeout), b


def test_frame_roundtrip():
    conn, raw = _conn_pair()
    try:
        header = struct.Struct("<IQIIQ").pack(MAGIC, GLOBAL_GROUP_ID, 7, 3, 5)
        raw.sendall(header + b"hello")
        assert conn.expect(GLOBAL_GROUP_ID, 7) == (3, b"hello")
    finally:
        conn.close()
        raw.close()


def test_send_produces_parseable_frame():
    conn, raw = _conn_pair()
    try:
        conn.send(gid=9, seq=2, src=4, payload=b"abc")
        frame = raw.recv(1024)
        magic, gid, seq, src, length = struct.Struct("<IQIIQ").unpack(frame[:28])
        assert (magic, gid, seq, src, length) == (MAGIC, 9, 2, 4, 3)
        assert frame[28:] == b"abc"
    finally:
        conn.close()
        raw.close()


def test_bad_magic_raises_protocol_error():
    conn, raw = _conn_pair()
    try:
        raw.sendall(struct.Struct("<IQIIQ").pack(0xDEADBEEF, 1, 0, 0, 0))
        with pytest.raises(ProtocolError, match="bad magic") as info:
            conn.expect(1, 0)
        assert info.value.peer == 1
    finally:
        conn.close()
        raw.close()


def test_expect_timeout_names_peer():
    conn, raw = _conn_pair(timeout=0.2)
    try:
        with pytest.raises(ProtocolError, match="timed out") as info:
            conn.expect(1, 0)
        assert info.value.peer == 1
    finally:
        conn.close()
        raw.close()


def test_stale_sequence_rejected():
    conn, raw = _conn_pair()
    try:
        raw.sendall(struct.Struct("<IQIIQ").pack(MAGIC, 1, 3, 0, 0))
        with pytest.raises(ProtocolError, match="seq"):
            conn.expect(1, 4)
    finally:
        conn.close()
        raw.close()


def test_closed_peer_raises():
    conn, raw = _conn_pair(timeout=2.0)
    raw.close()
    try:
        with pytest.raises(ProtocolError, match="closed"):
            conn.expect(1, 0)
    finally:
        conn.close()


@given(st.lists(st.binary(max_size=40), max_size=8))
def test_table_roundtrip(parts):
    assert _unpack_table(_pack_table(parts)) == list(parts)


def test_child_gid_properties():
    a = _child_gid(GLOBAL_GROUP_ID, 5, 0)
    assert a == _child_gid(GLOBAL_GROUP_ID, 5, 0)
    assert a != _child_gid(GLOBAL_GROUP_ID, 5, 1)
    assert a != _child_gid(GLOBAL_GROUP_ID, 6, 0)
    assert a != _child_gid(2, 5, 0)
    assert _child_gid(1, 1, -3) != 0  # negative colors are legal
