"""Cost-reduced factorized basis and its linear map back to the standard basis.

With ``J = J_1 * ... * J_K`` each coordinate ``z`` of a point contributes the
vector

    1,  c^{j_1}(z) * prod_{k>=2} cos^{j_k - 1}(2 L_{k-1} z)

over ``j_1 in 1..2J_1``, ``j_k in 1..J_k``, where ``c^{2j-1} = cos^{2j-1}``,
``c^{2j} = sin * cos^{2j-2}`` and ``L_k = J_1 * ... * J_k``.  That is
``2J + 1`` entries, exactly the size of the standard vector, yet only ``K``
cosines are evaluated per coordinate (the sine comes from ``sqrt(1 - cos^2)``,
valid on ``(0, 1)``); everything else is repeated multiplication.

Both bases span the same odd-harmonic space, so a fixed ``(2J+1) x (2J+1)``
matrix ``A`` maps one onto the other.  It is fitted by sampling both bases at
Chebyshev-spaced nodes inside ``(0, 1)`` and applied mode by mode to recover
the standard sketch tensor.

Note: on an interval shorter than the period the odd-harmonic functions are
numerically close to dependent, so the sampled system is badly conditioned
even though the residual on ``(0, 1)`` is tiny.  Only that residual matters,
because every statistic averages basis values at points inside ``(0, 1)``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .basis import as_unit_points, c_vector
from .errors import DomainError, EmptySketchError, ShapeMismatchError, SingularTransformError
from .io import read_container, write_container
from .sketch import (
    MapReduceReport,
    Shard,
    SketchTensor,
    ReadCounter,
    outer_sum,
    run_map_reduce,
    map_reduce_build,
    standardize,
)

__all__ = [
    "AccuracyParameter",
    "FactorizedTensor",
    "TrigCounter",
    "Transform1D",
    "factorized_basis_1d",
    "factorized_point_basis",
    "transform_nodes",
    "build_transform_1d",
    "recover_standard",
    "sketch_shard_factorized",
    "map_reduce_build_factorized",
    "write_transform",
    "read_transform",
    "write_tensor",
    "read_tensor",
    "sketch_pipeline",
]

COND_LIMIT = 1e12
RESIDUAL_LIMIT = 1e-8
NODE_MARGIN = 1e-3


@dataclass(frozen=True)
class AccuracyParameter:
    """Factorization ``(J_1, ..., J_K)`` of the series order ``J``."""

    parts: tuple[int, ...]

    def __post_init__(self):
        parts = tuple(int(v) for v in self.parts)
        if not parts or any(v < 1 for v in parts):
            raise ValueError(f"accuracy parameter needs positive parts, got {self.parts!r}")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def parse(cls, text: str) -> "AccuracyParameter":
        try:
            return cls(tuple(int(s) for s in text.replace(" ", "").split(",") if s))
        except ValueError:
            raise ValueError(f"cannot parse accuracy parameter {text!r}") from None

    @property
    def K(self) -> int:
        return len(self.parts)

    @property
    def J(self) -> int:
        return math.prod(self.parts)

    @property
    def prefixes(self) -> tuple[int, ...]:
        """``L_1 .. L_{K-1}`` with ``L_k = J_1 * ... * J_k``."""
        out, acc = [], 1
        for v in self.parts[:-1]:
            acc *= v
            out.append(acc)
        return tuple(out)

    @property
    def size(self) -> int:
        """Cardinality of the per-coordinate index set, ``1 + 2 J_1 J_2 ... J_K``."""
        return 1 + 2 * math.prod(self.parts)

    def __str__(self):
        return ",".join(str(v) for v in self.parts)


@dataclass(frozen=True, eq=False)
class FactorizedTensor:
    acc: AccuracyParameter
    p: int
    values: np.ndarray
    count: int
    standardized: bool = False

    def __post_init__(self):
        shape = (self.acc.size,) * self.p
        if self.values.shape != shape:
            raise ShapeMismatchError(f"values have shape {self.values.shape}, expected {shape}")

    @property
    def key(self):
        return ("factorized", self.acc.parts, self.p)

    @classmethod
    def zeros(cls, acc: AccuracyParameter, p: int) -> "FactorizedTensor":
        return cls(acc, p, np.zeros((acc.size,) * p), 0)


@dataclass
class TrigCounter:
    """Number of scalar cosine evaluations performed."""

    cos: int = 0


def _powers(base: np.ndarray, n: int) -> np.ndarray:
    """``base**0 .. base**(n-1)`` by repeated multiplication, stacked last."""
    out = np.empty(base.shape + (n,))
    out[..., 0] = 1.0
    for i in range(1, n):
        out[..., i] = out[..., i - 1] * base
    return out


def factorized_basis_1d(z, acc: AccuracyParameter, counter: TrigCounter | None = None) -> np.ndarray:
    """Factorized vector at each ``z``; shape ``z.shape + (2J+1,)``."""
    z = np.asarray(z, dtype=float)
    if not np.all((z > 0.0) & (z < 1.0)):
        raise DomainError("z must lie strictly inside (0, 1)")
    J1 = acc.parts[0]
    c = np.cos(z)
    s = np.sqrt(1.0 - c * c)  # positive on (0, pi)
    if counter is not None:
        counter.cos += z.size
    cp = _powers(c, 2 * J1)
    first = np.empty(z.shape + (2 * J1,))
    first[..., 0::2] = cp[..., 1::2]              # cos^{2j-1}
    first[..., 1::2] = s[..., None] * cp[..., 0::2]  # sin * cos^{2j-2}
    vec = first
    for L, Jk in zip(acc.prefixes, acc.parts[1:]):
        ck = np.cos((2.0 * L) * z)
        if counter is not None:
            counter.cos += z.size
        vec = (vec[..., :, None] * _powers(ck, Jk)[..., None, :]).reshape(z.shape + (-1,))
    out = np.empty(z.shape + (acc.size,))
    out[..., 0] = 1.0
    out[..., 1:] = vec
    return out


def factorized_point_basis(x: Sequence[float], acc: AccuracyParameter, counter: TrigCounter | None = None) -> np.ndarray:
    """Per-coordinate factorized vectors of one point, shape ``(p, 2J+1)``."""
    return factorized_basis_1d(np.asarray(x, dtype=float), acc, counter)


@dataclass(frozen=True, eq=False)
class Transform1D:
    """Matrix ``A`` with ``c_{0:2J}(z) = A @ factorized(z)`` on ``(0, 1)``."""

    acc: AccuracyParameter
    matrix: np.ndarray
    residual: float = float("nan")
    method: str = "solve"

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        return vectors @ self.matrix.T


def transform_nodes(n: int, margin: float = NODE_MARGIN) -> np.ndarray:
    """``n`` Chebyshev-spaced nodes mapped into ``[margin, 1 - margin]``."""
    m = np.arange(n)
    return 0.5 * (1.0 + np.cos(np.pi * (2 * m + 1) / (2 * n))) * (1.0 - 2.0 * margin) + margin


def _residual(A: np.ndarray, acc: AccuracyParameter, z: np.ndarray) -> float:
    return float(np.abs(c_vector(z, acc.J) - factorized_basis_1d(z, acc) @ A.T).max())


def build_transform_1d(acc: AccuracyParameter, margin: float = NODE_MARGIN) -> Transform1D:
    """Fit ``A`` from both bases sampled at ``2J+1`` nodes.

    Falls back to least squares over twice as many nodes when the sampled
    system's condition number exceeds ``1e12``.  The constant row is pinned to
    the first unit vector.  Raises :class:`SingularTransformError` when the
    held-out residual on ``4J+7`` interior points is not below ``1e-8``.
    """
    N = acc.size
    z = transform_nodes(N, margin)
    F = factorized_basis_1d(z, acc)
    S = c_vector(z, acc.J)
    method = "solve"
    try:
        if np.linalg.cond(F) > COND_LIMIT:
            method = "lstsq"
            z2 = transform_nodes(2 * N, margin)
            At = np.linalg.lstsq(factorized_basis_1d(z2, acc), c_vector(z2, acc.J), rcond=None)[0]
        else:
            At = np.linalg.solve(F, S)
    except np.linalg.LinAlgError as exc:
        raise SingularTransformError(f"cannot fit transform for Jbar=({acc}): {exc}") from None
    A = np.ascontiguousarray(At.T)
    A[0, :] = 0.0
    A[0, 0] = 1.0
    held_out = np.linspace(0.0, 1.0, 4 * acc.J + 9)[1:-1]
    res = _residual(A, acc, held_out)
    if not res < RESIDUAL_LIMIT:
        raise SingularTransformError(f"transform for Jbar=({acc}) has held-out residual {res:.3g}")
    return Transform1D(acc, A, res, method)


def _apply_modes(values: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    out = values
    for l in range(values.ndim):
        out = np.moveaxis(np.tensordot(matrix, out, axes=([1], [l])), 0, l)
    return np.ascontiguousarray(out)


def recover_standard(ft: FactorizedTensor, tf: Transform1D) -> SketchTensor:
    """Apply ``A`` along every mode (the Kronecker power, never materialized)."""
    if ft.acc != tf.acc:
        raise ShapeMismatchError(f"tensor has Jbar=({ft.acc}), transform has ({tf.acc})")
    return SketchTensor(ft.acc.J, ft.p, _apply_modes(ft.values, tf.matrix), ft.count, ft.standardized)


def _factorized_map(acc: AccuracyParameter, p: int, trig: TrigCounter | None = None):
    def map_block(points, counter: ReadCounter | None) -> FactorizedTensor:
        pts = as_unit_points(points, p)
        if counter is not None:
            counter.add(len(pts))
        if len(pts) == 0:
            return FactorizedTensor.zeros(acc, p)
        factors = [factorized_basis_1d(pts[:, l], acc, trig) for l in range(p)]
        return FactorizedTensor(acc, p, outer_sum(factors), len(pts))

    return map_block


def sketch_shard_factorized(
    shard: Shard | np.ndarray,
    acc: AccuracyParameter,
    p: int,
    counter: ReadCounter | None = None,
    trig: TrigCounter | None = None,
) -> FactorizedTensor:
    points = shard.points if isinstance(shard, Shard) else shard
    return _factorized_map(acc, p, trig)(points, counter)


def map_reduce_build_factorized(
    shards: Sequence[Shard],
    acc: AccuracyParameter,
    p: int,
    parallelism: int = 1,
    block_size: int | None = None,
    trig: TrigCounter | None = None,
) -> tuple[FactorizedTensor, MapReduceReport]:
    total, report = run_map_reduce(
        shards, _factorized_map(acc, p, trig), FactorizedTensor.zeros(acc, p), parallelism, block_size
    )
    if total.count == 0:
        raise EmptySketchError("all shards are empty")
    return standardize(total), report


def write_transform(path, tf: Transform1D, encoding: str = "binary") -> None:
    header = {"kind": "transform", "Jbar": tf.acc.parts, "J": tf.acc.J, "method": tf.method}
    write_container(path, header, tf.matrix, encoding)


def read_transform(path) -> Transform1D:
    header, arr = read_container(path)
    if header.get("kind") != "transform":
        raise ShapeMismatchError(f"{path} holds a {header.get('kind')!r}, not a transform")
    acc = AccuracyParameter(header["Jbar"])
    if arr.shape != (acc.size, acc.size):
        raise ShapeMismatchError(f"{path}: matrix shape {arr.shape} does not match Jbar=({acc})")
    return Transform1D(acc, arr, method=header.get("method", "solve"))


def write_tensor(path, t, acc: AccuracyParameter | None = None, encoding: str = "binary") -> None:
    """Save a standard or factorized tensor with its ``p``, order and count."""
    if isinstance(t, FactorizedTensor):
        header = {"kind": "factorized", "p": t.p, "J": t.acc.J, "Jbar": t.acc.parts}
    elif isinstance(t, SketchTensor):
        header = {"kind": "standard", "p": t.p, "J": t.J}
        if acc is not None:
            header["Jbar"] = acc.parts
    else:
        raise TypeError(f"cannot serialize {type(t).__name__}")
    header.update(n=t.count, standardized=int(t.standardized))
    write_container(path, header, t.values, encoding)


def read_tensor(path):
    """Load a tensor written by :func:`write_tensor`; checks shape against the header."""
    header, arr = read_container(path)
    kind = header.get("kind")
    try:
        p, n, std = header["p"], header["n"], bool(header["standardized"])
        if kind == "factorized":
            return FactorizedTensor(AccuracyParameter(header["Jbar"]), p, arr, n, std)
        if kind == "standard":
            return SketchTensor(header["J"], p, arr, n, std)
    except KeyError as exc:
        raise ShapeMismatchError(f"{path}: header lacks {exc}") from None
    raise ShapeMismatchError(f"{path} holds a {kind!r}, not a sketch tensor")


def sketch_pipeline(
    shards: Sequence[Shard],
    acc: AccuracyParameter,
    p: int,
    parallelism: int = 1,
    method: str = "auto",
    block_size: int | None = None,
):
    """One pass over the shards to a standardized standard-basis tensor.

    ``method`` is ``"factorized"`` (c-tilde statistics, then the transform),
    ``"direct"`` (standard basis at order ``J``) or ``"auto"``, which picks the
    factorized route when ``K >= 2``.  Returns ``(tensor, report)``; the
    report's ``extra`` holds the transform time and the route taken.
    """
    if method == "auto":
        method = "factorized" if acc.K >= 2 else "direct"
    if method == "direct":
        tensor, report = map_reduce_build(shards, acc.J, p, parallelism, block_size)
        report.extra.update(method="direct", transform_seconds=0.0)
        return tensor, report
    if method != "factorized":
        raise ValueError(f"unknown method {method!r}")
    t0 = time.perf_counter()
    tf = build_transform_1d(acc)
    t_build = time.perf_counter() - t0
    ft, report = map_reduce_build_factorized(shards, acc, p, parallelism, block_size)
    t1 = time.perf_counter()
    tensor = recover_standard(ft, tf)
    report.extra.update(
        method="factorized",
        transform_seconds=t_build + time.perf_counter() - t1,
        factorized=ft,
        transform=tf,
    )
    return tensor, report
