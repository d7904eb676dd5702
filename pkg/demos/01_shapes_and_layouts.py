"""
Grid shapes, rank coordinates, and round layouts
================================================

How a flat rank becomes a coordinate on a process grid, and how each
exchange round carves the block buffer into strided per-peer units.
"""

from torus_alltoall import (
    dims_create,
    rank_to_vector,
    split_color_key,
    stride_table,
    vector_to_rank,
)
from torus_alltoall.bench import layout_table_text

# Pick a balanced grid for 24 processes. Factors come out non-increasing
# and as close to each other as the divisors allow.
for d in (1, 2, 3):
    print(f"dims_create(24, {d}) = {dims_create(24, d)}")

# A rank is a mixed-radix number over the factors, dimension 0 fastest.
dims = dims_create(24, 3)  # 4x3x2
print(f"\nstride table for {dims}: {stride_table(dims)}")
for rank in (0, 7, 23):
    coords = rank_to_vector(rank, dims)
    assert vector_to_rank(coords, dims) == rank
    print(f"rank {rank:2d} sits at {coords}")

# Splitting along one dimension keeps all other digits fixed: the color
# is the rank with that digit zeroed, the key is the digit itself.
print()
for rank in (7, 23):
    color, key = split_color_key(rank, 1, dims)
    peers = [r for r in range(dims.p) if split_color_key(r, 1, dims)[0] == color]
    print(f"rank {rank:2d} along dim 1: color {color}, key {key}, peers {peers}")

# Each round reads the buffer through a different unit table. Early
# rounds are finely strided; the last round is fully contiguous.
for k in range(dims.d):
    print()
    print(layout_table_text(dims, k))
