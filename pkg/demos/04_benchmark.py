"""
A small latency comparison
==========================

Times the direct exchange against two grid shapes for 16 in-process
members. Every repetition is preceded by two barriers; the cost of a
repetition is the slowest member's time, and the reported number is the
best repetition. Thread timings share one interpreter, so treat the
ratios as illustrative, not as a scaling claim.
"""

from torus_alltoall.bench import BenchConfig, format_summary, run_bench_threads
from torus_alltoall.factorization import dims_create

cfg = BenchConfig(
    p=16,
    torus_dims=[dims_create(16, 2), dims_create(16, 4)],
    counts=[1, 10, 100, 1000],
    reps=10,
    warmups=3,
    check=True,  # verify each configuration once before timing it
)

rows = run_bench_threads(cfg)

header = f"{'dims':>6} {'algorithm':>9} {'elems':>6} {'best ns':>10}"
print(header)
print("-" * len(header))
for r in rows:
    print(f"{r['dims']:>6} {r['algorithm']:>9} {r['elems_per_block']:>6} "
          f"{r['time_ns_min_of_max']:>10}")

print()
print(format_summary(rows))
