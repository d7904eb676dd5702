"""Measurement harness and verification sweeps.

Timing protocol: every measurement is preceded by two barriers, each
member times only its own collective return with the monotonic
nanosecond clock, the per-repetition cost is the maximum over members
(collected with a gather after the measurement, never inside it), and
the reported figure is the minimum of those maxima over all
repetitions. Buffers are allocated and filled once per element count
and reused across repetitions. Elements are 32-bit integers.
"""

from __future__ import annotations

import csv
import struct
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from . import oracle
from .engine import alltoall_torus, expected_block_traffic, factorize_group
from .factorization import (
    Dims,
    as_dims,
    dims_create,
    ordered_factorizations,
    prime_factors,
)
from .group import ProcessGroup
from .layout import BlockSpec, build_round_layout, unit_offsets
from .transport_threaded import run_threaded

__all__ = [
    "BenchCheckError",
    "BenchConfig",
    "CSV_FIELDS",
    "DEFAULT_COUNTS",
    "VerifySummary",
    "bench_participant",
    "format_summary",
    "layout_table_text",
    "run_bench_threads",
    "run_verify",
    "verify_case",
    "write_csv",
]

# Deciles of every decade from 1 to 10000 elements per block.
DEFAULT_COUNTS = [
    c for decade in (1, 10, 100, 1000) for c in range(decade, 10 * decade, decade)
] + [10000]

CSV_FIELDS = [
    "p",
    "dims",
    "algorithm",
    "elems_per_block",
    "bytes_per_block",
    "reps",
    "warmups",
    "time_ns_min_of_max",
]

ELEM_BYTES = 4


class BenchCheckError(RuntimeError):
    """A timed configuration failed its pre-timing verification."""


@dataclass
class BenchConfig:
    p: int
    torus_dims: list[Dims] = field(default_factory=list)
    counts: list[int] = field(default_factory=lambda: list(DEFAULT_COUNTS))
    reps: int = 40
    warmups: int = 8
    check: bool = False


def bench_participant(group: ProcessGroup, cfg: BenchConfig) -> Optional[list[dict]]:
    """One member's share of a benchmark run; collective.

    Factorizes the group once per dims variant, then times the direct
    exchange and every torus variant for each element count. Returns the
    result rows on rank 0 and None elsewhere.
    """
    p = group.size
    if p != cfg.p:
        raise ValueError(f"group size {p} does not match configured p={cfg.p}")
    # uncached: several shapes of the same group may be timed side by side
    comms = [factorize_group(group, dims, cache=False) for dims in cfg.torus_dims]
    variants: list[tuple[str, object]] = [("direct", None)]
    variants.extend(("torus", comm) for comm in comms)

    try:
        rows = _run_variants(group, cfg, variants)
    finally:
        for comm in comms:
            comm.close()
    return rows if group.rank == 0 else None


def _run_variants(group: ProcessGroup, cfg: BenchConfig, variants) -> list[dict]:
    p = group.size
    rows: list[dict] = []
    for count in cfg.counts:
        block = BlockSpec(count, ELEM_BYTES)
        send = oracle.send_region(p, group.rank, count)
        recv = oracle.recv_region(p, count)
        for name, comm in variants:
            if comm is None:
                op = lambda: group.direct_alltoall(send, recv, block)  # noqa: E731
                dims_label = "-"
            else:
                op = lambda c=comm: alltoall_torus(c, send, recv, block)  # noqa: E731
                dims_label = str(comm.dims)
            if cfg.check and count > 0:
                recv.buffer[:] = 0
                op()
                report = oracle.verify_equal(
                    recv, oracle.expected_recv(p, group.rank, count), count
                )
                flags = group.allgather(b"\x01" if report.ok else b"\x00")
                if not all(f == b"\x01" for f in flags):
                    bad = [r for r, f in enumerate(flags) if f != b"\x01"]
                    raise BenchCheckError(
                        f"{name} dims={dims_label} count={count} failed verification "
                        f"at member(s) {bad}"
                        + (f": {report.message}" if not report.ok else "")
                    )
            times: list[int] = []
            for rep in range(cfg.warmups + cfg.reps):
                group.barrier()
                group.barrier()
                t0 = time.perf_counter_ns()
                op()
                elapsed = time.perf_counter_ns() - t0
                if rep >= cfg.warmups:
                    gathered = group.allgather(struct.pack("<Q", elapsed))
                    times.append(max(struct.unpack("<Q", g)[0] for g in gathered))
            if group.rank == 0:
                rows.append(
                    {
                        "p": p,
                        "dims": dims_label,
                        "algorithm": name,
                        "elems_per_block": count,
                        "bytes_per_block": count * ELEM_BYTES,
                        "reps": cfg.reps,
                        "warmups": cfg.warmups,
                        "time_ns_min_of_max": min(times),
                    }
                )
    return rows


def run_bench_threads(cfg: BenchConfig) -> list[dict]:
    """Run the benchmark on ``cfg.p`` participant threads."""
    results = run_threaded(cfg.p, bench_participant, cfg)
    return results[0]


def write_csv(rows: Iterable[dict], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def format_summary(rows: list[dict]) -> str:
    """Torus/direct time ratios per element count, one line each."""
    direct = {
        r["elems_per_block"]: r["time_ns_min_of_max"]
        for r in rows
        if r["algorithm"] == "direct"
    }
    lines = []
    for r in rows:
        if r["algorithm"] != "torus":
            continue
        count = r["elems_per_block"]
        base = direct.get(count)
        if not base:
            continue
        ratio = r["time_ns_min_of_max"] / base
        lines.append(
            f"p={r['p']} dims={r['dims']} count={count}: "
            f"torus {r['time_ns_min_of_max']} ns, direct {base} ns, "
            f"torus/direct {ratio:.3f}"
        )
    return "\n".join(lines)


def layout_table_text(dims, k: int) -> str:
    """Human-readable index table of round ``k``: one row per unit."""
    dims = as_dims(dims)
    layout = build_round_layout(k, dims, BlockSpec(1, 1))
    outer = ", ".join(f"dim{i} x{c} step {s}" for i, (c, s) in enumerate(layout.outer_dims, k + 1))
    lines = [
        f"dims {dims}  p {dims.p}  round {k}: "
        f"{layout.unit_count} units of {layout.blocks_per_unit} blocks, "
        f"segment {layout.seg_len_blocks}, unit stride {layout.unit_extent_blocks}"
        + (f", outer [{outer}]" if outer else "")
    ]
    for j in range(layout.unit_count):
        lines.append(f"unit[{j}] = {unit_offsets(layout, j)}")
    return "\n".join(lines)


# -- verification sweeps ----------------------------------------------------


@dataclass
class VerifySummary:
    cases: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_case(
    p: int,
    dims,
    elems_per_block: int,
    check_traffic: bool = True,
    check_invariants: bool = True,
) -> list[str]:
    """Cross-check one (p, dims, block size) exchange on threads.

    Runs the direct and the factorized exchange on tagged buffers and
    returns a list of discrepancy descriptions: factorized vs direct
    bytes, direct vs the independent expectation, the per-member block
    traffic against the closed form, and the per-boundary data
    invariant. Empty list means the case is clean.
    """
    dims = as_dims(dims)
    block = BlockSpec(elems_per_block, ELEM_BYTES)
    label = f"p={p} dims={dims} elems={elems_per_block}"

    def worker(g: ProcessGroup) -> list[str]:
        issues: list[str] = []
        send = oracle.send_region(p, g.rank, elems_per_block)
        recv_direct = oracle.recv_region(p, elems_per_block)
        recv_torus = oracle.recv_region(p, elems_per_block)
        g.direct_alltoall(send, recv_direct, block)
        comm = factorize_group(g, dims)

        def hook(k: int, view: memoryview) -> None:
            report = oracle.check_round_invariant(k, dims, comm.origin, view, block)
            if not report:
                issues.append(f"{label} rank {g.rank}: {report.message}")

        before = comm.blocks_sent
        alltoall_torus(
            comm, send, recv_torus, block,
            round_hook=hook if check_invariants else None,
        )
        sent = comm.blocks_sent - before

        report = oracle.verify_equal(recv_torus, recv_direct, elems_per_block)
        if not report:
            issues.append(f"{label} rank {g.rank}: torus != direct: {report.message}")
        report = oracle.verify_equal(
            recv_direct, oracle.expected_recv(p, g.rank, elems_per_block), elems_per_block
        )
        if not report:
            issues.append(f"{label} rank {g.rank}: direct != expected: {report.message}")
        if check_traffic and elems_per_block > 0:
            want = expected_block_traffic(dims)
            if sent != want:
                issues.append(f"{label} rank {g.rank}: sent {sent} blocks, expected {want}")
        return issues

    return [issue for member in run_threaded(p, worker) for issue in member]


def _sweep_dims(p: int) -> Iterable:
    if p <= 36:
        return ordered_factorizations(p)
    return (dims_create(p, d) for d in range(2, len(prime_factors(p)) + 1))


def run_verify(
    pmax: int,
    elems: tuple[int, ...] = (1, 3, 16),
    progress: Optional[Callable[[str], None]] = None,
) -> VerifySummary:
    """Verify every swept factorization for p = 2..pmax.

    Exhaustive over ordered factorizations up to p = 36; above that,
    over the balanced factorization of every feasible dimensionality.
    """
    summary = VerifySummary()
    for p in range(2, pmax + 1):
        p_cases = 0
        for dims in _sweep_dims(p):
            for e in elems:
                summary.failures.extend(verify_case(p, dims, e))
                summary.cases += 1
                p_cases += 1
        if progress is not None:
            progress(f"p={p}: {p_cases} cases, {len(summary.failures)} total failures")
    return summary
