"""Balanced k-d trees over partitioned data from one pass of trigonometric sketch statistics."""

from .basis import (
    Neighborhood,
    c_vector,
    coef_c,
    coef_g,
    g_vector,
    indicator_partial_sum_1d,
    indicator_partial_sum_pd,
    square_wave_reference,
)
from .errors import (
    DomainError,
    EmptySketchError,
    InsufficientPointsError,
    ShapeMismatchError,
    SingularTransformError,
)
from .factorized import (
    AccuracyParameter,
    FactorizedTensor,
    Transform1D,
    build_transform_1d,
    factorized_point_basis,
    recover_standard,
    sketch_pipeline,
)
from .sketch import (
    Shard,
    SketchTensor,
    approx_count,
    map_reduce_build,
    merge,
    sketch_shard,
    split_into_shards,
    standardize,
)
from .tree import KdNode, KdTree, audit_cells, build_exact_tree, build_tree, solve_median

__version__ = "0.1.0"
