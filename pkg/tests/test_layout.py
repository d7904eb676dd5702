import pytest
from hypothesis import given
from hypothesis import strategies as st

from torus_alltoall.factorization import as_dims, stride_table
from torus_alltoall.layout import (
    BlockSpec,
    build_round_layout,
    unit_offsets,
    unit_runs,
)

from support import (
    GOLD_2x3x4,
    GOLD_4x3x3x4_FRAGMENTS,
    GOLD_4x3x3x4_K1_UNIT0,
    GOLD_5x4,
    brute_unit_offsets,
)

B4 = BlockSpec(1, 4)
dims_lists = st.lists(st.integers(2, 6), min_size=1, max_size=4)


def test_blockspec_validation():
    assert BlockSpec(3, 4).bytes_per_block == 12
    assert BlockSpec(0, 4).bytes_per_block == 0
    with pytest.raises(ValueError):
        BlockSpec(-1, 4)
    with pytest.raises(ValueError):
        BlockSpec(1, 0)


def test_build_round_layout_fields():
    lay = build_round_layout(0, (5, 4), B4)
    assert lay.unit_count == 5
    assert lay.unit_extent_blocks == 1 and lay.seg_len_blocks == 1
    assert lay.outer_dims == ((4, 5),)
    assert lay.blocks_per_unit == 4

    lay = build_round_layout(1, (4, 3, 3, 4), B4)
    assert lay.unit_count == 3
    assert lay.unit_extent_blocks == 4 and lay.seg_len_blocks == 4
    assert lay.outer_dims == ((3, 12), (4, 36))
    assert lay.blocks_per_unit == 48

    with pytest.raises(ValueError):
        build_round_layout(2, (5, 4), B4)
    with pytest.raises(ValueError):
        build_round_layout(-1, (5, 4), B4)


def test_golden_table_5x4():
    mismatches = 0
    for k, units in GOLD_5x4.items():
        lay = build_round_layout(k, (5, 4), B4)
        assert lay.unit_count == len(units)
        for j, want in units.items():
            if unit_offsets(lay, j) != want:
                mismatches += 1
    assert mismatches == 0


def test_golden_table_2x3x4():
    mismatches = 0
    for k, units in GOLD_2x3x4.items():
        lay = build_round_layout(k, (2, 3, 4), B4)
        assert lay.unit_count == len(units)
        for j, want in units.items():
            if unit_offsets(lay, j) != want:
                mismatches += 1
    assert mismatches == 0


def test_golden_table_4x3x3x4():
    dims = (4, 3, 3, 4)
    mismatches = 0
    for (k, j), (prefix, suffix) in GOLD_4x3x3x4_FRAGMENTS.items():
        got = unit_offsets(build_round_layout(k, dims, B4), j)
        assert len(got) == 144 // as_dims(dims)[k]
        if got[: len(prefix)] != prefix or got[-len(suffix):] != suffix:
            mismatches += 1
    got = unit_offsets(build_round_layout(1, dims, B4), 0)
    if got != GOLD_4x3x3x4_K1_UNIT0:
        mismatches += 1
    assert mismatches == 0


@pytest.mark.parametrize("factors", [(5, 4), (2, 3, 4), (4, 3, 3, 4), (7,), (2, 2, 2)])
def test_offsets_match_digit_sort(factors):
    dims = as_dims(factors)
    for k in range(dims.d):
        lay = build_round_layout(k, dims, B4)
        for j in range(lay.unit_count):
            assert unit_offsets(lay, j) == brute_unit_offsets(factors, k, j), (k, j)


@given(dims_lists, st.data())
def test_offsets_match_digit_sort_random(factors, data):
    dims = as_dims(factors)
    k = data.draw(st.integers(0, dims.d - 1))
    lay = build_round_layout(k, dims, B4)
    j = data.draw(st.integers(0, lay.unit_count - 1))
    assert unit_offsets(lay, j) == brute_unit_offsets(factors, k, j)


@given(dims_lists, st.data())
def test_units_tile_buffer_exactly(factors, data):
    dims = as_dims(factors)
    k = data.draw(st.integers(0, dims.d - 1))
    lay = build_round_layout(k, dims, B4)
    seen: list[int] = []
    for j in range(lay.unit_count):
        offs = unit_offsets(lay, j)
        assert len(offs) == lay.blocks_per_unit
        assert offs[0] == j * lay.unit_extent_blocks
        seen.extend(offs)
    assert sorted(seen) == list(range(dims.p))


def test_last_round_fully_contiguous():
    for factors in [(5, 4), (2, 3, 4), (4, 3, 3, 4), (6,)]:
        dims = as_dims(factors)
        k = dims.d - 1
        lay = build_round_layout(k, dims, BlockSpec(3, 4))
        sigma = stride_table(dims)
        for j in range(lay.unit_count):
            assert unit_offsets(lay, j) == list(range(j * sigma[k], (j + 1) * sigma[k]))
            runs = unit_runs(lay, j)
            assert len(runs) == 1
            assert runs[0] == (j * sigma[k] * 12, sigma[k] * 12)


@given(dims_lists, st.data())
def test_runs_cover_offsets(factors, data):
    dims = as_dims(factors)
    k = data.draw(st.integers(0, dims.d - 1))
    eb = data.draw(st.sampled_from([1, 4, 8]))
    epb = data.draw(st.integers(1, 5))
    lay = build_round_layout(k, dims, BlockSpec(epb, eb))
    bb = epb * eb
    j = data.draw(st.integers(0, lay.unit_count - 1))
    runs = unit_runs(lay, j)
    # rebuild byte positions from the runs; must equal the block offsets
    rebuilt: list[int] = []
    for off, length in runs:
        assert length % bb == 0 and off % bb == 0
        rebuilt.extend(range(off // bb, (off + length) // bb))
    assert rebuilt == unit_offsets(lay, j)
    assert sum(length for _, length in runs) == lay.blocks_per_unit * bb
    # coalescing is maximal: a run never ends where the next begins
    # (serialization order is not monotone in general, so no < here)
    for (o1, l1), (o2, _) in zip(runs, runs[1:]):
        assert o1 + l1 != o2


def test_zero_byte_blocks_have_no_runs():
    lay = build_round_layout(0, (2, 3), BlockSpec(0, 4))
    assert unit_runs(lay, 0) == []
    assert unit_offsets(lay, 0) == [0, 2, 4]  # offsets still enumerable


def test_fingerprint_distinguishes_shape():
    a = build_round_layout(0, (2, 3), BlockSpec(1, 4)).fingerprint()
    assert build_round_layout(0, (2, 3), BlockSpec(1, 4)).fingerprint() == a
    assert build_round_layout(1, (2, 3), BlockSpec(1, 4)).fingerprint() != a
    assert build_round_layout(0, (3, 2), BlockSpec(1, 4)).fingerprint() != a
    assert build_round_layout(0, (2, 3), BlockSpec(2, 4)).fingerprint() != a
    assert build_round_layout(0, (2, 3), BlockSpec(1, 8)).fingerprint() != a


def test_unit_index_bounds():
    lay = build_round_layout(0, (2, 3), B4)
    with pytest.raises(ValueError):
        unit_offsets(lay, 2)
    with pytest.raises(ValueError):
        unit_offsets(lay, -1)
