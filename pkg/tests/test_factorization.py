import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torus_alltoall.factorization import (
    Dims,
    as_dims,
    dims_create,
    ordered_factorizations,
    prime_factors,
    rank_to_vector,
    split_color_key,
    stride_table,
    vector_to_rank,
)

from support import brute_factorizations, brute_lexmin_dims

# random grids up to a few hundred members
dims_lists = st.lists(st.integers(2, 6), min_size=1, max_size=4)


def test_dims_validation():
    with pytest.raises(ValueError):
        Dims((1, 2))
    with pytest.raises(ValueError):
        Dims(())
    with pytest.raises(ValueError):
        Dims((0,))
    d = Dims((2, 3, 4))
    assert d.p == 24 and d.d == 3
    assert list(d) == [2, 3, 4] and len(d) == 3 and d[1] == 3
    assert str(d) == "2x3x4"
    assert as_dims(d) is d
    assert as_dims([5, 4]).factors == (5, 4)


def test_prime_factors():
    assert prime_factors(1) == []
    assert prime_factors(2) == [2]
    assert prime_factors(60) == [2, 2, 3, 5]
    assert prime_factors(97) == [97]
    assert prime_factors(1152) == [2] * 7 + [3, 3]


def test_dims_create_reference_values():
    assert dims_create(1152, 2).factors == (36, 32)
    assert dims_create(1152, 3).factors == (12, 12, 8)
    assert dims_create(1152, 4).factors == (8, 6, 6, 4)
    assert dims_create(1152, 9).factors == (3, 3, 2, 2, 2, 2, 2, 2, 2)


def test_dims_create_small_values():
    assert dims_create(20, 2).factors == (5, 4)
    assert dims_create(24, 3).factors == (4, 3, 2)
    assert dims_create(36, 2).factors == (6, 6)
    assert dims_create(8, 3).factors == (2, 2, 2)
    assert dims_create(7, 1).factors == (7,)


def test_dims_create_infeasible():
    with pytest.raises(ValueError):
        dims_create(8, 4)
    with pytest.raises(ValueError):
        dims_create(7, 2)
    with pytest.raises(ValueError):
        dims_create(20, 0)


def test_dims_create_matches_bruteforce():
    for p in range(2, 65):
        for d in range(1, len(prime_factors(p)) + 1):
            got = dims_create(p, d)
            assert got.factors == brute_lexmin_dims(p, d), (p, d)
            assert math.prod(got.factors) == p
            # non-increasing order is part of the contract
            assert all(a >= b for a, b in zip(got.factors, got.factors[1:]))


def test_ordered_factorizations_exact_small():
    assert set(ordered_factorizations(6)) == {(6,), (2, 3), (3, 2)}
    assert set(ordered_factorizations(12)) == {
        (12,), (2, 6), (6, 2), (3, 4), (4, 3), (2, 2, 3), (2, 3, 2), (3, 2, 2),
    }
    assert set(ordered_factorizations(7)) == {(7,)}


def test_ordered_factorizations_match_bruteforce():
    for p in range(2, 37):
        got = list(ordered_factorizations(p))
        assert len(got) == len(set(got)), f"duplicates for p={p}"
        assert set(got) == brute_factorizations(p)


def test_stride_table_values():
    assert stride_table(as_dims((2, 3, 4))) == (1, 2, 6, 24)
    assert stride_table(as_dims((5, 4))) == (1, 5, 20)
    assert stride_table(as_dims((7,))) == (1, 7)


@given(dims_lists)
def test_stride_table_recurrence(factors):
    dims = as_dims(factors)
    sigma = stride_table(dims)
    assert len(sigma) == dims.d + 1
    assert sigma[0] == 1 and sigma[-1] == dims.p
    for i, f in enumerate(factors):
        assert sigma[i + 1] == sigma[i] * f


def test_rank_vector_reference_values():
    assert rank_to_vector(7, as_dims((2, 3, 4))) == (1, 0, 1)
    assert vector_to_rank((0, 1, 3), as_dims((2, 3, 4))) == 20
    assert rank_to_vector(7, as_dims((5, 4))) == (2, 1)
    assert rank_to_vector(0, as_dims((2, 2))) == (0, 0)


@given(dims_lists, st.data())
def test_rank_vector_roundtrip(factors, data):
    dims = as_dims(factors)
    rank = data.draw(st.integers(0, dims.p - 1))
    coords = rank_to_vector(rank, dims)
    assert len(coords) == dims.d
    assert all(0 <= c < f for c, f in zip(coords, factors))
    assert vector_to_rank(coords, dims) == rank
    # digit i reads off with the prefix-product stride
    sigma = stride_table(dims)
    assert coords == tuple((rank // sigma[i]) % f for i, f in enumerate(factors))


def test_split_color_key_reference_values():
    dims = as_dims((2, 3, 4))
    assert split_color_key(7, 1, dims) == (7, 0)
    assert split_color_key(23, 2, dims) == (5, 3)
    # peers: same color along the named dimension
    assert [r for r in range(24) if split_color_key(r, 1, dims)[0] == 7] == [7, 9, 11]
    assert [r for r in range(24) if split_color_key(r, 2, dims)[0] == 5] == [5, 11, 17, 23]


@given(dims_lists, st.data())
def test_split_color_key_partitions(factors, data):
    dims = as_dims(factors)
    dim = data.draw(st.integers(0, dims.d - 1))
    sigma = stride_table(dims)
    groups: dict[int, list[int]] = {}
    for rank in range(dims.p):
        color, key = split_color_key(rank, dim, dims)
        assert rank == color + key * sigma[dim]
        assert key == rank_to_vector(rank, dims)[dim]
        groups.setdefault(color, []).append(rank)
    assert len(groups) == dims.p // factors[dim]
    for color, members in groups.items():
        assert len(members) == factors[dim]
        keys = [split_color_key(m, dim, dims)[1] for m in members]
        assert keys == list(range(factors[dim]))  # ascending rank == ascending key
