"""Balanced k-d trees from a sketch, plus the exact-median baseline.

Each internal node splits its box along ``axis = (depth - 1) % p`` at the value
``m`` where the sketch's estimated counts on either side agree,

    h(m) = approx(a, b with b_t = m) - approx(a with a_t = m, b) = 0.

All coordinates except ``t`` enter ``h`` only through a fixed weight vector (the
sketch contracted against the box's ``g`` coefficients on those modes), so
after one contraction per node every evaluation of ``h`` costs ``O(J)``.

Roots are found by a 256-point grid scan followed by bisection of every sign
change bracket to a width of 1e-12; the candidate with the smallest ``|h|``
wins, ties going to the one nearest the interval midpoint.  With no sign change
the grid argmin is returned and the node is flagged degenerate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import Neighborhood, g_vector, harmonics
from .errors import InsufficientPointsError, ShapeMismatchError
from .io import DataFileError, atomic_write
from .sketch import SketchTensor, contract

__all__ = [
    "KdNode",
    "KdTree",
    "CellAudit",
    "GRID_POINTS",
    "solve_median",
    "build_tree",
    "build_exact_tree",
    "exact_leaf_counts",
    "audit_cells",
    "write_tree",
    "read_tree",
]

GRID_POINTS = 256
EDGE_MARGIN = 1e-9
X_TOL = 1e-12


@dataclass(eq=False)
class KdNode:
    depth: int
    cell_index: int
    region: Neighborhood
    axis: int
    split_value: float
    degenerate: bool = False
    children: tuple["KdNode", "KdNode"] | None = field(default=None, repr=False)

    def child_regions(self) -> tuple[Neighborhood, Neighborhood]:
        return self.region.split(self.axis, self.split_value)


@dataclass(eq=False)
class KdTree:
    """Complete depth-``D`` tree; ``nodes`` in level order (``2**D - 1`` of them)."""

    depth: int
    p: int
    nodes: list[KdNode]
    accuracy: object = None
    kind: str = "approximate"
    stats: dict = field(default_factory=dict)

    def node(self, d: int, k: int) -> KdNode:
        """Node ``k`` (1-based) at depth ``d`` (1-based)."""
        return self.nodes[2 ** (d - 1) - 1 + (k - 1)]

    def level(self, d: int) -> list[KdNode]:
        return self.nodes[2 ** (d - 1) - 1: 2**d - 1]

    @property
    def leaf_regions(self) -> list[Neighborhood]:
        out = []
        for node in self.level(self.depth):
            out.extend(node.child_regions())
        return out

    @property
    def degenerate_count(self) -> int:
        return sum(n.degenerate for n in self.nodes)


def _node_weights(values: np.ndarray, regions: list[Neighborhood], axis: int, J: int) -> np.ndarray:
    """Contract the sketch against every mode but ``axis`` for each region; ``(B, 2J+1)``."""
    p = values.ndim
    gs = [None if l == axis else g_vector(np.array([r.lower[l] for r in regions]),
                                          np.array([r.upper[l] for r in regions]), J)
          for l in range(p)]
    return np.stack([contract(values, [None if g is None else g[i] for g in gs]) for i in range(len(regions))])


def _balance_coefs(w: np.ndarray, lo: np.ndarray, hi: np.ndarray, J: int):
    """Rewrite ``h(m) = w . (g(a, m) - g(m, b))`` as ``const + sum alpha sin(km) + beta cos(km)``.

    Valid for ``a < m < b``, where the gates on ``m`` are always open.
    """
    k = harmonics(J)
    s = 2.0 / (np.pi * k)
    ga = (lo > 0.0).astype(float)[:, None]
    gb = (hi < 1.0).astype(float)[:, None]
    w_cos, w_sin = w[:, 1::2], w[:, 2::2]
    fixed_cos = -s * (ga * np.sin(lo[:, None] * k) + gb * np.sin(hi[:, None] * k))
    fixed_sin = s * (ga * np.cos(lo[:, None] * k) + gb * np.cos(hi[:, None] * k))
    const = 0.5 * (gb[:, 0] - ga[:, 0]) * w[:, 0] + np.sum(w_cos * fixed_cos + w_sin * fixed_sin, axis=1)
    return const, 2.0 * s * w_cos, -2.0 * s * w_sin, k


def _h(coefs, rows: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Balance function of the listed rows; ``m`` has shape ``(len(rows),)`` or ``(len(rows), G)``."""
    const, alpha, beta, k = coefs
    c, a, b = const[rows], alpha[rows], beta[rows]
    if m.ndim == 2:
        c, a, b = c[:, None], a[:, None, :], b[:, None, :]
    km = m[..., None] * k
    return c + np.sum(a * np.sin(km) + b * np.cos(km), axis=-1)


def _solve_batch(w: np.ndarray, lo: np.ndarray, hi: np.ndarray, J: int, grid: int = GRID_POINTS):
    """Solve ``h = 0`` for each row independently; returns ``(roots, degenerate)``.

    Every row's arithmetic is independent of the others, so solving a node on
    its own or inside a batch gives bitwise identical answers.
    """
    B = len(lo)
    coefs = _balance_coefs(w, lo, hi, J)
    every = np.arange(B)
    frac = np.linspace(0.0, 1.0, grid)
    g_lo = lo + EDGE_MARGIN
    g_hi = hi - EDGE_MARGIN
    ms = g_lo[:, None] + frac[None, :] * (g_hi - g_lo)[:, None]
    ms[:, -1] = g_hi
    hs = _h(coefs, every, ms)

    sgn = np.sign(hs)
    rows, cols = np.nonzero(sgn[:, :-1] * sgn[:, 1:] < 0)
    left = ms[rows, cols].copy()
    right = ms[rows, cols + 1].copy()
    s_left = sgn[rows, cols]
    width = right - left
    while True:
        active = width > X_TOL
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        mid = 0.5 * (left[idx] + right[idx])
        s_mid = np.sign(_h(coefs, rows[idx], mid))
        go_right = s_mid == s_left[idx]
        left[idx] = np.where(go_right, mid, left[idx])
        right[idx] = np.where(go_right, right[idx], mid)
        width[idx] = right[idx] - left[idx]
    roots = 0.5 * (left + right)
    h_roots = np.abs(_h(coefs, rows, roots)) if len(rows) else np.empty(0)

    zr, zc = np.nonzero(hs == 0.0)
    cand_row = np.concatenate([rows, zr])
    cand_m = np.concatenate([roots, ms[zr, zc]])
    cand_h = np.concatenate([h_roots, np.zeros(len(zr))])

    out = np.empty(B)
    degenerate = np.zeros(B, dtype=bool)
    centre = 0.5 * (lo + hi)
    for i in range(B):
        sel = np.nonzero(cand_row == i)[0]
        if len(sel) == 0:
            out[i] = ms[i, np.argmin(np.abs(hs[i]))]
            degenerate[i] = True
            continue
        order = np.lexsort((np.abs(cand_m[sel] - centre[i]), cand_h[sel]))
        out[i] = cand_m[sel[order[0]]]
    return out, degenerate


def _check_sketch(t: SketchTensor):
    if not isinstance(t, SketchTensor) or not t.standardized:
        raise ValueError("need a standardized standard-basis SketchTensor")


def solve_median(t_sketch: SketchTensor, nb: Neighborhood, axis: int) -> tuple[float, bool]:
    """Approximate conditional median of coordinate ``axis`` (0-based) inside ``nb``.

    Returns ``(m, degenerate)``.
    """
    _check_sketch(t_sketch)
    if nb.dim != t_sketch.p or not 0 <= axis < t_sketch.p:
        raise ShapeMismatchError("neighborhood or axis does not match the sketch")
    w = _node_weights(t_sketch.values, [nb], axis, t_sketch.J)
    roots, deg = _solve_batch(w, np.array([nb.lower[axis]]), np.array([nb.upper[axis]]), t_sketch.J)
    return float(roots[0]), bool(deg[0])


def build_tree(t_sketch: SketchTensor, D: int, min_leaf_points: float | None = 10) -> KdTree:
    """Depth-``D`` tree from the sketch alone, level by level.

    Refuses depths whose ideal leaf fraction ``2**-D`` falls below
    ``min_leaf_points / n``; pass ``None`` to skip the check.
    """
    _check_sketch(t_sketch)
    if D < 1:
        raise ValueError("depth must be at least 1")
    if min_leaf_points is not None and t_sketch.count > 0 and 2.0**-D < min_leaf_points / t_sketch.count:
        raise InsufficientPointsError(
            f"depth {D} leaves about {t_sketch.count / 2**D:.3g} points per cell (< {min_leaf_points})"
        )
    p, J = t_sketch.p, t_sketch.J
    t0 = time.perf_counter()
    nodes: list[KdNode] = []
    regions = [Neighborhood.full(p)]
    parents: list[KdNode] = []
    for d in range(1, D + 1):
        axis = (d - 1) % p
        w = _node_weights(t_sketch.values, regions, axis, J)
        lo = np.array([r.lower[axis] for r in regions])
        hi = np.array([r.upper[axis] for r in regions])
        roots, deg = _solve_batch(w, lo, hi, J)
        level = [
            KdNode(d, k + 1, r, axis, float(m), bool(g))
            for k, (r, m, g) in enumerate(zip(regions, roots, deg))
        ]
        for i, parent in enumerate(parents):
            parent.children = (level[2 * i], level[2 * i + 1])
        nodes.extend(level)
        parents = level
        regions = [c for node in level for c in node.child_regions()]
    stats = {"solve_seconds": time.perf_counter() - t0, "degenerate": sum(n.degenerate for n in nodes)}
    return KdTree(D, p, nodes, accuracy=J, kind="approximate", stats=stats)


def _lower_median(values: np.ndarray) -> float:
    k = (len(values) + 1) // 2 - 1
    return float(np.partition(values, k)[k])


def _exact_levels(points: np.ndarray, D: int):
    """Yield per level a list of ``(median, index array)``; median is nan when empty."""
    members = [np.arange(len(points))]
    for d in range(1, D + 1):
        axis = (d - 1) % points.shape[1]
        level, nxt = [], []
        for idx in members:
            if len(idx) == 0:
                level.append((math.nan, idx))
                nxt.extend([idx, idx])
                continue
            vals = points[idx, axis]
            m = _lower_median(vals)
            level.append((m, idx))
            nxt.extend([idx[vals < m], idx[vals > m]])
        yield axis, level
        members = nxt
    yield None, members


def exact_leaf_counts(points, D: int) -> np.ndarray:
    """Leaf counts of the exact-median tree; works on any real-valued data."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2**D:
        raise InsufficientPointsError(f"need at least {2**D} points for depth {D}, got {len(pts)}")
    *_, (_, leaves) = _exact_levels(pts, D)
    return np.array([len(ix) for ix in leaves])


def build_exact_tree(points, D: int) -> KdTree:
    """Canonical tree splitting at the lower median of the in-cell points.

    Points equal to a split value belong to neither child.  A cell with no
    points is split at its midpoint and flagged degenerate.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ShapeMismatchError("points must be an (n, p) array")
    if len(pts) < 2**D:
        raise InsufficientPointsError(f"need at least {2**D} points for depth {D}, got {len(pts)}")
    p = pts.shape[1]
    nodes: list[KdNode] = []
    regions = [Neighborhood.full(p)]
    parents: list[KdNode] = []
    for d, (axis, level_data) in zip(range(1, D + 1), _exact_levels(pts, D)):
        level = []
        for k, (region, (m, _)) in enumerate(zip(regions, level_data)):
            lo, hi = region.lower[axis], region.upper[axis]
            degenerate = not (lo < m < hi)
            if degenerate:
                m = 0.5 * (lo + hi)
            level.append(KdNode(d, k + 1, region, axis, m, degenerate))
        for i, parent in enumerate(parents):
            parent.children = (level[2 * i], level[2 * i + 1])
        nodes.extend(level)
        parents = level
        regions = [c for node in level for c in node.child_regions()]
    return KdTree(D, p, nodes, accuracy=None, kind="exact")


@dataclass
class CellAudit:
    """Exact per-leaf recount of a point set against a tree."""

    depth: int
    n: int
    counts: np.ndarray
    discarded: int

    @property
    def ideal(self) -> float:
        return self.n / 2**self.depth

    @property
    def deviation(self) -> np.ndarray:
        return self.counts - self.ideal

    @property
    def rel_deviation(self) -> np.ndarray:
        """Deviation as a fraction of the ideal cell count ``n / 2**D``."""
        return self.deviation / self.ideal

    @property
    def frac_deviation(self) -> np.ndarray:
        """Deviation as a fraction of ``n``."""
        return self.deviation / self.n

    @property
    def log2_counts(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log2(self.counts.astype(float))

    @property
    def max_rel_deviation(self) -> float:
        return float(np.abs(self.rel_deviation).max())

    @property
    def mean_rel_deviation(self) -> float:
        return float(np.abs(self.rel_deviation).mean())

    def to_csv(self) -> str:
        lines = ["depth,leaf_index,count,log2_count,rel_deviation"]
        for k, (c, l2, r) in enumerate(zip(self.counts, self.log2_counts, self.rel_deviation), 1):
            lines.append(f"{self.depth},{k},{int(c)},{float(l2)!r},{float(r)!r}")
        return "\n".join(lines) + "\n"


def audit_cells(tree: KdTree, points) -> CellAudit:
    """Route every point to its leaf with strict comparisons.

    Points on a splitting hyperplane, or not strictly inside the unit cube,
    are discarded and counted separately.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != tree.p:
        raise ShapeMismatchError(f"points of shape {pts.shape} vs tree dimension {tree.p}")
    n = len(pts)
    axes = np.array([nd.axis for nd in tree.nodes])
    splits = np.array([nd.split_value for nd in tree.nodes])
    keep = np.all((pts > 0.0) & (pts < 1.0), axis=1)
    idx = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    for _ in range(tree.depth):
        v = pts[rows, axes[idx]]
        s = splits[idx]
        keep &= v != s
        idx = 2 * idx + np.where(v < s, 1, 2)
    leaves = idx[keep] - (2**tree.depth - 1)
    counts = np.bincount(leaves, minlength=2**tree.depth)
    return CellAudit(tree.depth, n, counts, int(n - keep.sum()))


def write_tree(path, tree: KdTree) -> None:
    """Level-order ``d,k,t,split_value,degenerate`` records; ``t`` is 1-based."""
    acc = tree.accuracy if tree.accuracy is not None else "none"
    lines = [
        f"# kdsketch-tree version=1 kind={tree.kind} p={tree.p} depth={tree.depth} accuracy={acc}",
        "d,k,t,split_value,degenerate",
    ]
    for nd in tree.nodes:
        lines.append(f"{nd.depth},{nd.cell_index},{nd.axis + 1},{nd.split_value!r},{int(nd.degenerate)}")
    atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_tree(path) -> KdTree:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# kdsketch-tree"):
        raise DataFileError(f"{path}:1: not a kdsketch tree file")
    meta = dict(item.split("=", 1) for item in text[0].split()[2:])
    p, D = int(meta["p"]), int(meta["depth"])
    records = []
    for lineno, line in enumerate(text[2:], 3):
        if not line.strip():
            continue
        try:
            d, k, t, m, g = line.split(",")
            records.append((int(d), int(k), int(t) - 1, float(m), bool(int(g))))
        except ValueError:
            raise DataFileError(f"{path}:{lineno}: bad record {line!r}") from None
    if len(records) != 2**D - 1:
        raise DataFileError(f"{path}: expected {2**D - 1} nodes, found {len(records)}")
    nodes: list[KdNode] = []
    regions = [Neighborhood.full(p)]
    pos = 0
    parents: list[KdNode] = []
    for d in range(1, D + 1):
        level = []
        for k, region in enumerate(regions, 1):
            rd, rk, axis, m, g = records[pos]
            pos += 1
            if (rd, rk) != (d, k):
                raise DataFileError(f"{path}: records out of level order at ({rd},{rk})")
            level.append(KdNode(d, k, region, axis, m, g))
        for i, parent in enumerate(parents):
            parent.children = (level[2 * i], level[2 * i + 1])
        nodes.extend(level)
        parents = level
        regions = [c for nd in level for c in nd.child_regions()]
    acc = meta.get("accuracy", "none")
    return KdTree(D, p, nodes, accuracy=None if acc == "none" else acc, kind=meta.get("kind", "approximate"))
