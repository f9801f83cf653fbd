"""Additive sketch tensors over (partitioned) point sets.

A sketch of order ``J`` in ``p`` dimensions holds, for every multi-index
``(j_1, ..., j_p)`` in ``{0..2J}^p``, the sum over points of
``prod_l c_{j_l}(x_l)``.  Sums over disjoint shards add, so the whole tensor
is computable in one parallel pass; dividing by the point count gives the
standardized tensor from which box fractions are read off by contracting each
mode against the box's ``g`` coefficients.

Arrays are dense, C-ordered, shape ``(2J+1,) * p``; the flat position of
``(j_1, ..., j_p)`` is ``sum_l j_l * (2J+1)**(p-l)``.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .basis import Neighborhood, as_unit_points, c_vector, g_vector
from .errors import EmptySketchError, ShapeMismatchError

__all__ = [
    "SketchTensor",
    "Shard",
    "ReadCounter",
    "MapReduceReport",
    "outer_sum",
    "sketch_shard",
    "merge",
    "tree_reduce",
    "standardize",
    "truncate",
    "contract",
    "approx_count",
    "map_reduce_build",
    "run_map_reduce",
    "empirical_error",
    "split_into_shards",
]


@dataclass(frozen=True, eq=False)
class SketchTensor:
    """Sum (or, once standardized, mean) of ``c_j(x)`` over ingested points.

    ``count`` always records how many points went in; after standardization
    the values are divided by it and ``values[0, ..., 0] == 1``.
    """

    J: int
    p: int
    values: np.ndarray
    count: int
    standardized: bool = False

    def __post_init__(self):
        shape = (2 * self.J + 1,) * self.p
        if self.values.shape != shape:
            raise ShapeMismatchError(f"values have shape {self.values.shape}, expected {shape}")

    @property
    def key(self):
        return ("standard", self.J, self.p)

    @classmethod
    def zeros(cls, J: int, p: int) -> "SketchTensor":
        return cls(J, p, np.zeros((2 * J + 1,) * p), 0)


@dataclass
class Shard:
    id: int
    points: np.ndarray


@dataclass
class ReadCounter:
    """Counts point reads performed by map tasks."""

    reads: int = 0

    def add(self, k: int) -> None:
        self.reads += int(k)


@dataclass
class MapReduceReport:
    map_seconds: float = 0.0
    reduce_seconds: float = 0.0
    reads: int = 0
    shards: int = 0
    parallelism: int = 1
    extra: dict = field(default_factory=dict)


def _chunk_rows(width: int, p: int) -> int:
    if p <= 2:
        return 65536
    return int(max(64, min(65536, 2**18 // width)))


def outer_sum(factors: Sequence[np.ndarray]) -> np.ndarray:
    """``sum_n  factors[0][n] (x) factors[1][n] (x) ...`` for ``(n, m_l)`` arrays.

    Works in fixed-size row chunks, so the rounding pattern depends only on the
    input rows, not on how the caller batched them.
    """
    p = len(factors)
    n = factors[0].shape[0]
    widths = [f.shape[1] for f in factors]
    if p == 1:
        return factors[0].sum(axis=0)
    inner = int(np.prod(widths[1:]))
    rows = _chunk_rows(inner, p)
    acc = np.zeros((widths[0], inner))
    for s in range(0, n, rows):
        blocks = [f[s:s + rows] for f in factors]
        kr = blocks[-1]
        for b in reversed(blocks[1:-1]):
            kr = (b[:, :, None] * kr[:, None, :]).reshape(len(b), -1)
        acc += blocks[0].T @ kr
    return acc.reshape(widths)


def _standard_map(J: int, p: int):
    def map_block(points: np.ndarray, counter: ReadCounter | None) -> SketchTensor:
        pts = as_unit_points(points, p)
        if counter is not None:
            counter.add(len(pts))
        if len(pts) == 0:
            return SketchTensor.zeros(J, p)
        factors = [c_vector(pts[:, l], J) for l in range(p)]
        return SketchTensor(J, p, outer_sum(factors), len(pts))

    return map_block


def sketch_shard(shard: Shard | np.ndarray, J: int, p: int, counter: ReadCounter | None = None) -> SketchTensor:
    """Raw (unstandardized) sketch of one shard."""
    points = shard.points if isinstance(shard, Shard) else shard
    return _standard_map(J, p)(points, counter)


def _check_same(t1, t2):
    if type(t1) is not type(t2) or t1.key != t2.key:
        raise ShapeMismatchError(f"cannot combine {t1.key} with {t2.key}")


def merge(t1, t2):
    """Combine two sketches of disjoint point sets.

    Raw tensors add entrywise.  Two standardized tensors combine into the
    standardized tensor of the union (count-weighted mean), so the operation
    stays linear either way.
    """
    _check_same(t1, t2)
    if t1.standardized != t2.standardized:
        raise ShapeMismatchError("cannot merge a standardized tensor with a raw one")
    if not t1.standardized:
        return replace(t1, values=t1.values + t2.values, count=t1.count + t2.count)
    total = t1.count + t2.count
    if total == 0:
        raise EmptySketchError("both tensors are empty")
    w1, w2 = t1.count / total, t2.count / total
    return replace(t1, values=w1 * t1.values + w2 * t2.values, count=total)


def tree_reduce(tensors: Sequence):
    """Pairwise (balanced binary tree) fold of ``merge`` in the given order."""
    level = list(tensors)
    if not level:
        raise ValueError("nothing to reduce")
    while len(level) > 1:
        nxt = [merge(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def standardize(t):
    """Divide by the point count.  Already-standardized input is returned as is."""
    if t.standardized:
        return t
    if t.count <= 0:
        raise EmptySketchError("cannot standardize an empty sketch")
    return replace(t, values=t.values / t.count, standardized=True)


def truncate(t: SketchTensor, J: int) -> SketchTensor:
    """Order-``J`` sketch read off a higher-order one.

    The index layout puts harmonic ``2j-1`` at positions ``2j-1, 2j`` for
    every order, so a lower order is the leading ``(2J+1)^p`` block.
    """
    if not 1 <= J <= t.J:
        raise ValueError(f"cannot truncate order {t.J} to {J}")
    block = t.values[(slice(0, 2 * J + 1),) * t.p]
    return replace(t, J=J, values=np.ascontiguousarray(block))


def contract(values: np.ndarray, vectors: Sequence[np.ndarray | None]) -> np.ndarray:
    """Contract mode ``l`` of ``values`` with ``vectors[l]``; ``None`` keeps the mode.

    Modes are contracted from the last to the first, one matrix-vector product
    each, so the cost is linear in the tensor size.
    """
    out = values
    for l in reversed(range(len(vectors))):
        v = vectors[l]
        if v is None:
            continue
        out = np.moveaxis(out, l, -1) @ v if l != out.ndim - 1 else out @ v
    return out


def approx_count(t: SketchTensor, nb: Neighborhood) -> float:
    """Approximate fraction of points strictly inside ``nb``."""
    if not t.standardized:
        raise ValueError("approx_count needs a standardized tensor")
    if nb.dim != t.p:
        raise ShapeMismatchError(f"neighborhood dimension {nb.dim} vs sketch dimension {t.p}")
    gs = [g_vector(nb.lower[l], nb.upper[l], t.J) for l in range(t.p)]
    return float(contract(t.values, gs))


def split_into_shards(points: np.ndarray, R: int, align: int | None = None) -> list[Shard]:
    """Contiguous split into ``R`` shards.

    Without ``align`` shard sizes differ by at most one.  With ``align`` every
    shard boundary falls on a multiple of ``align`` rows, which together with
    the same ``block_size`` in :func:`run_map_reduce` makes the result
    independent of ``R``.
    """
    points = np.asarray(points, dtype=float)
    if R < 1:
        raise ValueError("need at least one shard")
    if align is None:
        return [Shard(i, chunk) for i, chunk in enumerate(np.array_split(points, R))]
    nblocks = -(-len(points) // align)
    cuts = [min(len(points), align * int(c)) for c in np.linspace(0, nblocks, R + 1).round()]
    return [Shard(i, points[cuts[i]:cuts[i + 1]]) for i in range(R)]


def run_map_reduce(
    shards: Sequence[Shard],
    map_block: Callable,
    empty,
    parallelism: int = 1,
    block_size: int | None = None,
):
    """Generic map (per shard or per fixed-size block) plus pairwise-tree reduce.

    With ``block_size`` set, each shard is mapped block by block and the reduce
    runs over the concatenated block list, so block-aligned shardings of the
    same point stream give bitwise identical results.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be positive")
    shards = list(shards)
    if not shards:
        raise ValueError("no shards given")
    counters = [ReadCounter() for _ in shards]

    def run(i):
        pts = shards[i].points
        if block_size is None:
            return [map_block(pts, counters[i])]
        out = [map_block(pts[s:s + block_size], counters[i]) for s in range(0, len(pts), block_size)]
        return out or [empty]

    t0 = time.perf_counter()
    if parallelism == 1:
        mapped = [run(i) for i in range(len(shards))]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            mapped = list(pool.map(run, range(len(shards))))
    t1 = time.perf_counter()
    total = tree_reduce([t for part in mapped for t in part])
    t2 = time.perf_counter()
    report = MapReduceReport(
        map_seconds=t1 - t0,
        reduce_seconds=t2 - t1,
        reads=sum(c.reads for c in counters),
        shards=len(shards),
        parallelism=parallelism,
    )
    return total, report


def map_reduce_build(
    shards: Sequence[Shard],
    J: int,
    p: int,
    parallelism: int = 1,
    block_size: int | None = None,
) -> tuple[SketchTensor, MapReduceReport]:
    """Sketch every shard, merge, standardize.  Returns ``(tensor, report)``."""
    total, report = run_map_reduce(shards, _standard_map(J, p), SketchTensor.zeros(J, p), parallelism, block_size)
    if total.count == 0:
        raise EmptySketchError("all shards are empty")
    return standardize(total), report


def empirical_error(points, t: SketchTensor, nb: Neighborhood) -> float:
    """Exact in-box fraction (strict inequalities) minus the sketch estimate."""
    pts = as_unit_points(points, t.p)
    return float(nb.contains(pts).mean()) - approx_count(t, nb)
