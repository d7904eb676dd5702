"""Factorizations of a group size and mixed-radix rank arithmetic.

A group of ``p`` participants is arranged as a grid with dimension
orders ``D[0..d-1]``. Ranks are linearized with dimension 0 varying
fastest: the coordinate along dimension ``i`` carries a stride of
``D[0] * ... * D[i-1]`` ranks, the ``i``-th entry of the stride table.
Everything in this module is a pure function on immutable values and is
safe to call from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

__all__ = [
    "Dims",
    "DimsLike",
    "as_dims",
    "dims_create",
    "ordered_factorizations",
    "prime_factors",
    "rank_to_vector",
    "split_color_key",
    "stride_table",
    "vector_to_rank",
]


@dataclass(frozen=True, init=False)
class Dims:
    """Ordered dimension orders of a process grid.

    ``factors[i]`` is the number of participants along dimension ``i``.
    Factors below 2 are rejected: a unit dimension would add an exchange
    round that moves nothing, and splitting along it would produce
    single-member groups.
    """

    factors: tuple[int, ...]

    def __init__(self, factors: Iterable[int]) -> None:
        fs = tuple(int(f) for f in factors)
        if not fs:
            raise ValueError("need at least one dimension order")
        for f in fs:
            if f < 2:
                raise ValueError(f"dimension orders must be >= 2, got {f}")
        object.__setattr__(self, "factors", fs)

    @property
    def d(self) -> int:
        """Number of dimensions."""
        return len(self.factors)

    @property
    def p(self) -> int:
        """Total group size, the product of all dimension orders."""
        return math.prod(self.factors)

    def __iter__(self) -> Iterator[int]:
        return iter(self.factors)

    def __len__(self) -> int:
        return len(self.factors)

    def __getitem__(self, i: int) -> int:
        return self.factors[i]

    def __str__(self) -> str:
        return "x".join(str(f) for f in self.factors)


DimsLike = Union[Dims, Sequence[int]]


def as_dims(dims: DimsLike) -> Dims:
    """Coerce a factor sequence to :class:`Dims` (no-op for Dims input)."""
    if isinstance(dims, Dims):
        return dims
    return Dims(dims)


def prime_factors(n: int) -> list[int]:
    """Prime factors of ``n`` in ascending order, with multiplicity."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    out: list[int] = []
    f = 2
    while f * f <= n:
        while n % f == 0:
            out.append(f)
            n //= f
        f += 1
    if n > 1:
        out.append(n)
    return out


def _lexmin_factorization(p: int, d: int, cap: int) -> tuple[int, ...] | None:
    """Lexicographically minimal non-increasing d-factorization of p.

    Every factor lies in [2, cap]. Returns None when impossible. Choosing
    the smallest feasible leading factor and recursing is exact: the
    candidates form a prefix-closed set, so greedy selection minimizes
    the sorted factor vector lexicographically.
    """
    if d == 1:
        return (p,) if 2 <= p <= cap else None
    lo = 2
    while lo ** d < p:
        lo += 1
    for f in range(lo, cap + 1):
        if p % f:
            continue
        rest = _lexmin_factorization(p // f, d - 1, f)
        if rest is not None:
            return (f,) + rest
    return None


def dims_create(p: int, d: int) -> Dims:
    """Most balanced d-dimensional factorization of ``p``.

    Among all ways to write ``p`` as a product of ``d`` factors, each at
    least 2, returns the one whose factors, sorted in non-increasing
    order, are lexicographically minimal: the largest factor is as small
    as possible, then the second largest, and so on. The result is in
    non-increasing order.

    Parameters
    ----------
    p : int
        Group size to factor, >= 1.
    d : int
        Number of dimensions, >= 1.

    Raises
    ------
    ValueError
        If ``p`` has fewer than ``d`` prime factors (counted with
        multiplicity), so no such factorization exists.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    best = _lexmin_factorization(p, d, p)
    if best is None:
        raise ValueError(
            f"{p} cannot be split into {d} factors of at least 2: "
            f"it has only {len(prime_factors(p)) if p > 1 else 0} prime factors"
        )
    return Dims(best)


def ordered_factorizations(p: int) -> Iterator[tuple[int, ...]]:
    """Yield every ordered factorization of ``p`` into factors >= 2.

    Order matters: (2, 6) and (6, 2) are distinct. Includes the trivial
    one-factor tuple ``(p,)``. Intended for exhaustive verification
    sweeps at small ``p``.
    """
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")

    def rec(n: int) -> Iterator[tuple[int, ...]]:
        for f in range(2, n + 1):
            if n % f:
                continue
            if f == n:
                yield (f,)
            else:
                for rest in rec(n // f):
                    yield (f,) + rest

    return rec(p)


def stride_table(dims: DimsLike) -> tuple[int, ...]:
    """Prefix products of the dimension orders, ``d + 1`` entries.

    Entry ``i`` is ``D[0] * ... * D[i-1]``: the rank stride of the
    coordinate along dimension ``i``, and likewise the block stride used
    by round-``i`` layouts. Entry 0 is 1 and entry ``d`` is ``p``.
    """
    dims = as_dims(dims)
    table = [1]
    for f in dims.factors:
        table.append(table[-1] * f)
    return tuple(table)


def rank_to_vector(rank: int, dims: DimsLike) -> tuple[int, ...]:
    """Grid coordinates of ``rank``, dimension 0 varying fastest.

    Inverse of :func:`vector_to_rank`: ``rank == sum(O[i] * sigma[i])``
    where ``sigma`` is the stride table.
    """
    dims = as_dims(dims)
    if not 0 <= rank < dims.p:
        raise ValueError(f"rank {rank} out of range for p={dims.p}")
    coords = []
    r = rank
    for f in dims.factors:
        coords.append(r % f)
        r //= f
    return tuple(coords)


def vector_to_rank(coords: Sequence[int], dims: DimsLike) -> int:
    """Rank of the grid coordinates ``coords`` (dimension 0 fastest)."""
    dims = as_dims(dims)
    if len(coords) != dims.d:
        raise ValueError(f"expected {dims.d} coordinates, got {len(coords)}")
    rank = 0
    stride = 1
    for c, f in zip(coords, dims.factors):
        if not 0 <= c < f:
            raise ValueError(f"coordinate {c} out of range for order {f}")
        rank += c * stride
        stride *= f
    return rank


def split_color_key(rank: int, dim: int, dims: DimsLike) -> tuple[int, int]:
    """Color and key that group ``rank`` with its dimension-``dim`` peers.

    Two ranks receive the same color exactly when their coordinates
    agree in every dimension except ``dim``; the key is the coordinate
    along ``dim``, so key order within a color class is coordinate
    order. The color is the rank with its dimension-``dim`` coordinate
    zeroed, i.e. the lowest rank of the class.
    """
    dims = as_dims(dims)
    if not 0 <= dim < dims.d:
        raise ValueError(f"dim {dim} out of range for d={dims.d}")
    coords = rank_to_vector(rank, dims)
    stride = stride_table(dims)[dim]
    key = coords[dim]
    return rank - key * stride, key
