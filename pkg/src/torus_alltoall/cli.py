"""Command line front end: bench, verify, layout-dump."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional

from .bench import (
    BenchConfig,
    DEFAULT_COUNTS,
    bench_participant,
    format_summary,
    layout_table_text,
    run_bench_threads,
    run_verify,
    write_csv,
)
from .factorization import Dims, as_dims, dims_create
from .transport_tcp import connect_tcp_group


def _parse_dims(text: str, p: int) -> Dims:
    """``a,b,c`` as explicit factors, ``auto:d`` for the balanced pick."""
    if text.startswith("auto:"):
        return dims_create(p, int(text.split(":", 1)[1]))
    factors = tuple(int(f) for f in text.split(","))
    dims = as_dims(factors)
    if dims.p != p:
        raise ValueError(f"dims {dims} multiply to {dims.p}, not p={p}")
    return dims


def _parse_counts(text: str) -> list[int]:
    counts = [int(c) for c in text.split(",")]
    if any(c < 0 for c in counts):
        raise ValueError("element counts must be non-negative")
    return counts


def _parse_root(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torus-alltoall",
        description="Factorized all-to-all exchange: benchmarks and checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="time direct vs factorized exchanges")
    bench.add_argument("--p", type=int, required=True, help="number of members")
    bench.add_argument(
        "--transport", choices=("threads", "tcp"), default="threads",
        help="threads spawns all members in-process; tcp joins a cluster",
    )
    bench.add_argument(
        "--dims", action="append", metavar="SPEC",
        help="torus shape, 'a,b,c' or 'auto:d'; repeatable (default auto:2)",
    )
    bench.add_argument(
        "--counts", metavar="LIST",
        help="comma-separated elements per block (default: decade deciles 1..10000)",
    )
    bench.add_argument("--reps", type=int, default=40, help="timed repetitions")
    bench.add_argument("--warmups", type=int, default=8, help="untimed repetitions")
    bench.add_argument("--csv", metavar="FILE", help="write rows to FILE (default stdout)")
    bench.add_argument(
        "--check", action="store_true",
        help="verify each configuration once before timing it",
    )
    bench.add_argument("--rank", type=int, help="this member's rank (tcp only)")
    bench.add_argument(
        "--root", metavar="HOST:PORT",
        help="rendezvous address of rank 0 (tcp only)",
    )

    verify = sub.add_parser("verify", help="sweep factorizations against the oracle")
    verify.add_argument("--pmax", type=int, required=True, help="largest member count")
    verify.add_argument(
        "--blocks", default="1,3,16", metavar="LIST",
        help="comma-separated elements per block to sweep (default 1,3,16)",
    )

    dump = sub.add_parser("layout-dump", help="print one round's block index table")
    dump.add_argument("--dims", required=True, metavar="SPEC", help="factors, 'a,b,c'")
    dump.add_argument("--round", type=int, required=True, help="round index, 0-based")

    return parser


def _cmd_bench(args, parser) -> int:
    try:
        # "" is a user error, only an absent flag means the default sweep
        counts = _parse_counts(args.counts) if args.counts is not None else list(DEFAULT_COUNTS)
        torus_dims = [_parse_dims(s, args.p) for s in (args.dims or ["auto:2"])]
    except ValueError as exc:
        parser.error(str(exc))
    cfg = BenchConfig(
        p=args.p, torus_dims=torus_dims, counts=counts,
        reps=args.reps, warmups=args.warmups, check=args.check,
    )
    if args.transport == "tcp":
        if args.rank is None or args.root is None:
            parser.error("--transport tcp requires --rank and --root")
        try:
            host, port = _parse_root(args.root)
        except ValueError as exc:
            parser.error(str(exc))
        with connect_tcp_group(host, port, args.rank, args.p) as group:
            rows = bench_participant(group, cfg)
    else:
        rows = run_bench_threads(cfg)
    if rows is None:
        return 0  # non-root tcp member
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, sys.stdout)
    summary = format_summary(rows)
    if summary:
        print(summary)
    return 0


def _cmd_verify(args, parser) -> int:
    try:
        blocks = tuple(_parse_counts(args.blocks))
    except ValueError as exc:
        parser.error(str(exc))
    summary = run_verify(args.pmax, blocks, progress=print)
    if summary.ok:
        print(f"OK: {summary.cases} cases verified")
        return 0
    for failure in summary.failures:
        print(f"FAIL: {failure}")
    print(f"{len(summary.failures)} failure(s) in {summary.cases} cases")
    return 1


def _cmd_layout_dump(args, parser) -> int:
    try:
        dims = as_dims(tuple(int(f) for f in args.dims.split(",")))
        if not 0 <= args.round < dims.d:
            raise ValueError(f"round {args.round} out of range for {dims.d} dims")
    except ValueError as exc:
        parser.error(str(exc))
    print(layout_table_text(dims, args.round))
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench":
        return _cmd_bench(args, parser)
    if args.command == "verify":
        return _cmd_verify(args, parser)
    return _cmd_layout_dump(args, parser)


if __name__ == "__main__":
    sys.exit(main())
