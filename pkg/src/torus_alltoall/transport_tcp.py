"""TCP transport: one participant per process, star-wired per group.

Wiring: the group's rank 0 listens, every other member connects and
sends its own rank as a little-endian u32, once. All group traffic then
flows over these sockets, with rank 0 relaying frames between member
pairs that have no direct connection. Every message is framed as

    magic   u32   0x54415432
    group   u64   group identifier
    seq     u32   collective sequence number within the group
    source  u32   sender's rank within the group
    length  u64   payload byte count
    payload

all integers little-endian. The (group, seq, source) tag makes frames
self-identifying, so concurrent collectives on different groups never
interleave even when their members overlap. The frame carries no
destination: within one collective a member emits frames in ascending
destination order, so the relay infers each frame's target from its
position, while receivers place payloads by the source field and are
therefore independent of delivery order.

Splits build the child stars. After the parent group agrees on the
partition, each child's rank 0 opens an ephemeral listener and its
address is circulated through the parent group before the child members
connect. Child group ids are derived deterministically from the parent
id, the parent's collective sequence and the color, so every member
computes the same id without extra traffic.

Blocking receives carry a timeout (default 30 s): mismatched
participation or a dead peer surfaces as :class:`ProtocolError` naming
the peer instead of hanging.
"""

from __future__ import annotations

import multiprocessing
import queue
import socket
import struct
import threading
import time
from typing import Any, Callable, Sequence

from .group import ProcessGroup, ProtocolError, TransportError
from .layout import BlockSpec, RoundLayout, unit_runs
from .region import Region, copy_runs

__all__ = ["GLOBAL_GROUP_ID", "MAGIC", "connect_tcp_group", "run_local_cluster"]

MAGIC = 0x54415432
GLOBAL_GROUP_ID = 1
_HEADER = struct.Struct("<IQIIQ")
_DEFAULT_TIMEOUT = 30.0


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _child_gid(parent_gid: int, seq: int, color: int) -> int:
    gid = _fnv1a64(struct.pack("<QIq", parent_gid, seq & 0xFFFFFFFF, color))
    return gid or 1


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed")
        buf.extend(chunk)
    return bytes(buf)


class _Dead:
    def __init__(self, reason: str) -> None:
        self.reason = reason


class _Conn:
    """One socket plus a reader thread that keeps it drained.

    Continuous draining is what makes the star deadlock-free: a sender
    can always push its frames because the peer's reader thread consumes
    them into a queue regardless of what the peer's collective is
    currently doing.
    """

    def __init__(self, sock: socket.socket, peer: int, timeout: float) -> None:
        try:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except OSError:
            pass  # not a TCP socket; batching tradeoff does not apply

        self._sock = sock
        self.peer = peer
        self.timeout = timeout
        self._send_lock = threading.Lock()
        self._inbox: queue.Queue = queue.Queue()
        self._closed = False
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        try:
            while True:
                header = _recv_exact(self._sock, _HEADER.size)
                magic, gid, seq, src, length = _HEADER.unpack(header)
                if magic != MAGIC:
                    self._inbox.put(_Dead(f"bad magic 0x{magic:08x} from member {self.peer}"))
                    return
                payload = _recv_exact(self._sock, length) if length else b""
                self._inbox.put((gid, seq, src, payload))
        except (OSError, ConnectionError):
            self._inbox.put(_Dead(f"connection to member {self.peer} closed"))

    def send(self, gid: int, seq: int, src: int, payload: bytes) -> None:
        frame = _HEADER.pack(MAGIC, gid, seq, src, len(payload)) + payload
        try:
            with self._send_lock:
                self._sock.sendall(frame)
        except OSError as exc:
            raise ProtocolError(f"send to member {self.peer} failed: {exc}", peer=self.peer)

    def expect(self, gid: int, seq: int) -> tuple[int, bytes]:
        """Next frame, which must belong to collective (gid, seq)."""
        try:
            item = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise ProtocolError(
                f"timed out after {self.timeout}s waiting for group {gid} "
                f"seq {seq} from member {self.peer}",
                peer=self.peer,
            ) from None
        if isinstance(item, _Dead):
            raise ProtocolError(item.reason, peer=self.peer)
        got_gid, got_seq, src, payload = item
        if got_gid != gid or got_seq != seq:
            raise ProtocolError(
                f"expected group {gid} seq {seq} from member {self.peer}, "
                f"got group {got_gid} seq {got_seq}",
                peer=self.peer,
            )
        return src, payload

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        self._reader.join(timeout=1.0)


def _pack_table(parts: Sequence[bytes]) -> bytes:
    out = [struct.pack("<I", len(parts))]
    out.extend(struct.pack("<Q", len(p)) for p in parts)
    out.extend(parts)
    return b"".join(out)


def _unpack_table(data: bytes) -> list[bytes]:
    (n,) = struct.unpack_from("<I", data, 0)
    lengths = struct.unpack_from(f"<{n}Q", data, 4)
    parts = []
    pos = 4 + 8 * n
    for length in lengths:
        parts.append(data[pos : pos + length])
        pos += length
    return parts


class _TcpMember:
    """Transport endpoint of one member; rank 0 doubles as the relay."""

    def __init__(
        self,
        gid: int,
        rank: int,
        size: int,
        host: str,
        timeout: float,
        conns: dict[int, _Conn],
    ) -> None:
        self.group_id = gid
        self.rank = rank
        self.size = size
        self._host = host
        self._timeout = timeout
        self._conns = conns  # hub: rank -> conn for every spoke; spoke: {0: conn}
        self._seq = 0
        self._closed = False

    def _next_seq(self) -> int:
        self._seq = (self._seq + 1) & 0xFFFFFFFF
        return self._seq

    def _dests(self, member: int) -> list[int]:
        return [b for b in range(self.size) if b != member]

    # -- control collectives --------------------------------------------

    def allgather(self, payload: bytes) -> list[bytes]:
        seq = self._next_seq()
        gid = self.group_id
        if self.size == 1:
            return [payload]
        if self.rank == 0:
            parts: list[bytes] = [b""] * self.size
            parts[0] = payload
            for r in range(1, self.size):
                src, data = self._conns[r].expect(gid, seq)
                if src != r:
                    raise ProtocolError(
                        f"frame from member {r} claims source {src}", peer=r
                    )
                parts[r] = data
            table = _pack_table(parts)
            for r in range(1, self.size):
                self._conns[r].send(gid, seq, 0, table)
            return parts
        conn = self._conns[0]
        conn.send(gid, seq, self.rank, payload)
        src, table = conn.expect(gid, seq)
        if src != 0:
            raise ProtocolError(f"gather table claims source {src}", peer=0)
        return _unpack_table(table)

    def barrier(self) -> None:
        self.allgather(b"")

    # -- exchanges --------------------------------------------------------

    def alltoall(self, send: Region, recv: Region, layout: RoundLayout) -> None:
        if layout.block.bytes_per_block == 0:
            self.barrier()
            return
        seq = self._next_seq()
        gid = self.group_id
        unit_bytes = layout.blocks_per_unit * layout.block.bytes_per_block
        my_runs = unit_runs(layout, self.rank)
        copy_runs(send, my_runs, recv, my_runs)
        if self.size == 1:
            return
        if self.rank == 0:
            for b in range(1, self.size):
                self._conns[b].send(gid, seq, 0, send.gather(unit_runs(layout, b)))
            for a in range(1, self.size):
                for b in self._dests(a):
                    src, payload = self._conns[a].expect(gid, seq)
                    if src != a or len(payload) != unit_bytes:
                        raise ProtocolError(
                            f"member {a} sent a malformed exchange frame "
                            f"(source {src}, {len(payload)} bytes, expected {unit_bytes})",
                            peer=a,
                        )
                    if b == 0:
                        recv.scatter(unit_runs(layout, a), payload)
                    else:
                        self._conns[b].send(gid, seq, a, payload)
        else:
            conn = self._conns[0]
            for b in self._dests(self.rank):
                conn.send(gid, seq, self.rank, send.gather(unit_runs(layout, b)))
            seen = set()
            for _ in range(self.size - 1):
                src, payload = conn.expect(gid, seq)
                if src == self.rank or src >= self.size or src in seen:
                    raise ProtocolError(f"unexpected exchange frame source {src}", peer=0)
                if len(payload) != unit_bytes:
                    raise ProtocolError(
                        f"unit from member {src} is {len(payload)} bytes, "
                        f"expected {unit_bytes}",
                        peer=src,
                    )
                seen.add(src)
                recv.scatter(unit_runs(layout, src), payload)

    def direct_alltoall(self, send: Region, recv: Region, block: BlockSpec) -> None:
        if block.bytes_per_block == 0:
            self.barrier()
            return
        seq = self._next_seq()
        gid = self.group_id
        bb = block.bytes_per_block
        recv.set_block(self.rank, send.get_block(self.rank))
        if self.size == 1:
            return
        if self.rank == 0:
            for b in range(1, self.size):
                self._conns[b].send(gid, seq, 0, send.get_block(b))
            for a in range(1, self.size):
                for b in self._dests(a):
                    src, payload = self._conns[a].expect(gid, seq)
                    if src != a or len(payload) != bb:
                        raise ProtocolError(
                            f"member {a} sent a malformed block frame", peer=a
                        )
                    if b == 0:
                        recv.set_block(a, payload)
                    else:
                        self._conns[b].send(gid, seq, a, payload)
        else:
            conn = self._conns[0]
            for b in self._dests(self.rank):
                conn.send(gid, seq, self.rank, send.get_block(b))
            seen = set()
            for _ in range(self.size - 1):
                src, payload = conn.expect(gid, seq)
                if src == self.rank or src >= self.size or src in seen or len(payload) != bb:
                    raise ProtocolError(f"unexpected block frame from source {src}", peer=0)
                seen.add(src)
                recv.set_block(src, payload)

    # -- split ------------------------------------------------------------

    def split(self, color: int, key: int) -> "_TcpMember":
        table = self.allgather(struct.pack("<qq", color, key))
        triples = [struct.unpack("<qq", t) for t in table]
        members = sorted(
            (r for r, (c, _) in enumerate(triples) if c == color),
            key=lambda r: (triples[r][1], r),
        )
        my_rank = members.index(self.rank)
        child_size = len(members)

        listener = None
        port = -1
        if my_rank == 0 and child_size > 1:
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind((self._host, 0))
            listener.listen(child_size - 1)
            listener.settimeout(self._timeout)
            port = listener.getsockname()[1]
        ports = self.allgather(struct.pack("<q", port))
        gid = _child_gid(self.group_id, self._seq, color)

        conns: dict[int, _Conn] = {}
        try:
            if my_rank == 0:
                if listener is not None:
                    pending: dict[int, socket.socket] = {}
                    for _ in range(child_size - 1):
                        sock, _addr = listener.accept()
                        sock.settimeout(self._timeout)
                        (r,) = struct.unpack("<I", _recv_exact(sock, 4))
                        if not 1 <= r < child_size or r in pending:
                            raise ProtocolError(f"bad child handshake rank {r}")
                        sock.settimeout(None)
                        pending[r] = sock
                    conns = {r: _Conn(s, r, self._timeout) for r, s in pending.items()}
            else:
                (leader_port,) = struct.unpack("<q", ports[members[0]])
                sock = _connect_retry(self._host, leader_port, self._timeout)
                sock.sendall(struct.pack("<I", my_rank))
                conns = {0: _Conn(sock, 0, self._timeout)}
        finally:
            if listener is not None:
                listener.close()
        return _TcpMember(gid, my_rank, child_size, self._host, self._timeout, conns)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for conn in self._conns.values():
            conn.close()


def _connect_retry(host: str, port: int, timeout: float) -> socket.socket:
    deadline = time.monotonic() + timeout
    while True:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.settimeout(timeout)
        try:
            sock.connect((host, port))
            sock.settimeout(None)
            return sock
        except OSError as exc:
            sock.close()
            if time.monotonic() >= deadline:
                raise ProtocolError(f"could not reach {host}:{port}: {exc}") from None
            time.sleep(0.05)


def connect_tcp_group(
    host: str, port: int, rank: int, size: int, timeout: float = _DEFAULT_TIMEOUT
) -> ProcessGroup:
    """Join the global TCP group and return this member's handle.

    Rank 0 listens on ``(host, port)``; every other rank connects there
    and identifies itself. The call returns once the whole star is wired,
    so it doubles as the initial synchronization point.
    """
    if not 0 <= rank < size:
        raise ValueError(f"rank {rank} out of range for size {size}")
    conns: dict[int, _Conn] = {}
    if rank == 0 and size > 1:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind((host, port))
            listener.listen(size - 1)
            listener.settimeout(timeout)
            pending: dict[int, socket.socket] = {}
            for _ in range(size - 1):
                try:
                    sock, _addr = listener.accept()
                except socket.timeout:
                    raise ProtocolError(
                        f"timed out waiting for {size - 1 - len(pending)} member(s) to join"
                    ) from None
                sock.settimeout(timeout)
                (r,) = struct.unpack("<I", _recv_exact(sock, 4))
                if not 1 <= r < size or r in pending:
                    raise ProtocolError(f"bad handshake rank {r}")
                sock.settimeout(None)
                pending[r] = sock
            conns = {r: _Conn(s, r, timeout) for r, s in pending.items()}
        finally:
            listener.close()
    elif rank != 0:
        sock = _connect_retry(host, port, timeout)
        sock.sendall(struct.pack("<I", rank))
        conns = {0: _Conn(sock, 0, timeout)}
    return ProcessGroup(_TcpMember(GLOBAL_GROUP_ID, rank, size, host, timeout, conns))


# -- local multi-process driver -------------------------------------------


def free_port(host: str = "127.0.0.1") -> int:
    """A currently free TCP port on ``host`` (best effort)."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind((host, 0))
        return s.getsockname()[1]


def _cluster_main(fn, args, host, port, rank, size, timeout, outbox) -> None:
    try:
        group = connect_tcp_group(host, port, rank, size, timeout=timeout)
        try:
            result = fn(group, *args)
        finally:
            group.close()
        outbox.put((rank, True, result))
    except BaseException as exc:  # report, never hang the parent
        outbox.put((rank, False, f"{type(exc).__name__}: {exc}"))


def run_local_cluster(
    size: int,
    fn: Callable[..., Any],
    args: tuple = (),
    host: str = "127.0.0.1",
    timeout: float = 60.0,
) -> list:
    """Run ``fn(group, *args)`` on ``size`` local processes over TCP.

    ``fn`` and its results must be picklable (spawned processes import
    them by reference). Returns per-rank results; raises
    :class:`TransportError` if any member fails or the cluster stalls.
    """
    ctx = multiprocessing.get_context("spawn")
    port = free_port(host)
    outbox = ctx.Queue()
    procs = [
        ctx.Process(
            target=_cluster_main,
            args=(fn, args, host, port, r, size, timeout, outbox),
            daemon=True,
        )
        for r in range(size)
    ]
    for p in procs:
        p.start()
    results: dict[int, tuple[bool, Any]] = {}
    deadline = time.monotonic() + timeout
    try:
        while len(results) < size:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportError(f"cluster of {size} stalled after {timeout}s")
            try:
                rank, ok, value = outbox.get(timeout=min(remaining, 0.5))
            except queue.Empty:
                dead = [
                    r
                    for r, p in enumerate(procs)
                    if not p.is_alive() and r not in results and p.exitcode
                ]
                if dead:
                    raise TransportError(f"member(s) {dead} exited without reporting")
                continue
            results[rank] = (ok, value)
    finally:
        for p in procs:
            p.join(timeout=5.0)
            if p.is_alive():
                p.terminate()
    failures = {r: v for r, (ok, v) in results.items() if not ok}
    if failures:
        detail = "; ".join(f"rank {r}: {v}" for r, v in sorted(failures.items()))
        raise TransportError(f"cluster member failure: {detail}")
    return [results[r][1] for r in range(size)]
