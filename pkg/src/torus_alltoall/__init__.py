"""Factorized all-to-all exchange over pluggable process groups.

The exchange runs in one round per torus dimension, each round a
concurrent all-to-all over small sub-groups, trading bandwidth for a
latency term that grows with the sum of the factors instead of their
product. Send and receive segments are described by strided layouts so
every round moves data straight between user and staging buffers with
no pack step.
"""

from .engine import (
    Role,
    TorusComm,
    alltoall_torus,
    buffer_schedule,
    expected_block_traffic,
    factorize_group,
    has_factorization,
)
from .factorization import (
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
from .group import (
    CollectiveAbortedError,
    LayoutMismatchError,
    ProcessGroup,
    ProtocolError,
    TransportError,
)
from .layout import BlockSpec, RoundLayout, build_round_layout, unit_offsets, unit_runs
from .oracle import (
    VerifyReport,
    check_round_invariant,
    decode_tag,
    encode_tag,
    expected_recv,
    send_tags,
    verify_equal,
)
from .region import Region, copy_audit, copy_runs
from .transport_tcp import connect_tcp_group, run_local_cluster
from .transport_threaded import run_threaded, threaded_group

__version__ = "0.1.0"

__all__ = [
    "BlockSpec",
    "CollectiveAbortedError",
    "Dims",
    "LayoutMismatchError",
    "ProcessGroup",
    "ProtocolError",
    "Region",
    "Role",
    "RoundLayout",
    "TorusComm",
    "TransportError",
    "VerifyReport",
    "alltoall_torus",
    "as_dims",
    "buffer_schedule",
    "build_round_layout",
    "check_round_invariant",
    "connect_tcp_group",
    "copy_audit",
    "copy_runs",
    "decode_tag",
    "dims_create",
    "encode_tag",
    "expected_block_traffic",
    "expected_recv",
    "factorize_group",
    "has_factorization",
    "ordered_factorizations",
    "prime_factors",
    "rank_to_vector",
    "run_local_cluster",
    "run_threaded",
    "send_tags",
    "split_color_key",
    "stride_table",
    "threaded_group",
    "unit_offsets",
    "unit_runs",
    "vector_to_rank",
    "verify_equal",
]
