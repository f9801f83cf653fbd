"""Synthetic data and the accuracy / runtime studies.

Data are equicorrelated Gaussians (or uniforms) drawn from numpy's Philox
counter-based generator.  Every block of ``GEN_BLOCK`` rows has its own
stream, ``Philox(seed).jumped(block)``, so the output depends only on the seed
and never on how generation is parallelized.

Studies write plain CSV (header row, floats in full precision) and never plot.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import DomainError, InsufficientPointsError
from .factorized import AccuracyParameter, sketch_pipeline
from .io import atomic_write
from .sketch import split_into_shards, truncate
from .tree import audit_cells, build_tree

__all__ = [
    "ExperimentConfig",
    "ScalingRecord",
    "GEN_BLOCK",
    "parse_config",
    "load_config",
    "format_config",
    "generate_correlated_normal",
    "generate_uniform",
    "scale_to_unit",
    "make_dataset",
    "run_accuracy_study",
    "run_runtime_study",
    "rows_to_csv",
    "write_csv",
]

GEN_BLOCK = 1 << 18
SKETCH_BLOCK = 1 << 16


@dataclass
class ExperimentConfig:
    """Study settings.  ``rho`` is a list so one config can sweep correlations.

    ``distribution`` is ``normal`` (equicorrelated, min-max scaled by
    ``margin``) or ``uniform`` (already in the open cube; ``rho`` ignored).
    """

    n: int = 1_000_000
    p: int = 3
    rho: list[float] = field(default_factory=lambda: [0.0])
    depths: list[int] = field(default_factory=lambda: [6])
    accuracy_grid: list[AccuracyParameter] = field(default_factory=lambda: [AccuracyParameter((3, 5))])
    seeds: list[int] = field(default_factory=lambda: [1])
    shards: int = 1
    parallelism: int = 1
    distribution: str = "normal"
    margin: float = 1e-6
    method: str = "auto"

    def __post_init__(self):
        self.accuracy_grid = [a if isinstance(a, AccuracyParameter) else AccuracyParameter(tuple(a))
                              for a in self.accuracy_grid]
        self.validate()

    def validate(self) -> None:
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        if self.distribution not in ("normal", "uniform"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.distribution == "normal":
            for r in self.rho:
                _check_rho(r, self.p)
        if not self.depths or min(self.depths) < 1:
            raise ValueError("depths must be positive")
        if self.n < 2 ** max(self.depths):
            raise InsufficientPointsError(f"n={self.n} is below 2^{max(self.depths)}")
        if self.shards < 1 or self.parallelism < 1:
            raise ValueError("shards and parallelism must be positive")
        if not 0.0 < self.margin < 0.5:
            raise ValueError("margin must lie in (0, 0.5)")
        if self.method not in ("auto", "direct", "factorized"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.seeds or not self.accuracy_grid:
            raise ValueError("need at least one seed and one accuracy parameter")


_LIST_INT = ("depths", "seeds")
_INT = ("n", "p", "shards", "parallelism")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    List values are comma separated, except ``accuracy_grid`` whose entries
    are separated by ``;`` (each entry is itself a comma list like ``3,5``).
    """
    known = {f.name for f in fields(ExperimentConfig)}
    kw: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or key not in known:
            raise ValueError(f"{source}:{lineno}: unknown or malformed entry {raw.strip()!r}")
        try:
            if key in _INT:
                kw[key] = int(value)
            elif key in _LIST_INT:
                kw[key] = [int(v) for v in value.split(",")]
            elif key == "rho":
                kw[key] = [float(v) for v in value.split(",")]
            elif key == "margin":
                kw[key] = float(value)
            elif key == "accuracy_grid":
                kw[key] = [AccuracyParameter.parse(v) for v in value.split(";") if v.strip()]
            else:
                kw[key] = value
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), str(path))


def format_config(cfg: ExperimentConfig) -> str:
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "accuracy_grid":
            v = "; ".join(str(a) for a in v)
        elif isinstance(v, list):
            v = ",".join(repr(x) for x in v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"


def _check_rho(rho: float, p: int) -> None:
    lower = -1.0 / (p - 1) if p > 1 else -math.inf
    if not lower < rho < 1.0:
        raise DomainError(f"rho={rho} does not give a positive definite equicorrelation matrix for p={p}")


def _blocks(n: int, seed: int, draw, parallelism: int) -> np.ndarray:
    starts = range(0, n, GEN_BLOCK)

    def one(i):
        rng = np.random.Generator(np.random.Philox(seed).jumped(i))
        return draw(rng, min(GEN_BLOCK, n - i * GEN_BLOCK))

    idx = range(len(starts))
    if parallelism > 1:
        with ThreadPoolExecutor(parallelism) as pool:
            parts = list(pool.map(one, idx))
    else:
        parts = [one(i) for i in idx]
    return np.concatenate(parts) if parts else np.empty((0,))


def generate_correlated_normal(n: int, p: int, rho: float, seed: int, parallelism: int = 1) -> np.ndarray:
    """``n`` draws from ``N(0, (1-rho) I + rho 11')``.

    Uses the symmetric root ``sqrt(1-rho) I + c 11'`` with
    ``c = (sqrt(1-rho+p rho) - sqrt(1-rho)) / p``, so no factorization is needed.
    """
    _check_rho(rho, p)
    s = math.sqrt(1.0 - rho)
    c = (math.sqrt(1.0 - rho + p * rho) - s) / p

    def draw(rng, m):
        z = rng.standard_normal((m, p))
        return s * z + c * z.sum(axis=1, keepdims=True)

    return _blocks(n, seed, draw, parallelism).reshape(n, p)


def generate_uniform(n: int, p: int, seed: int, parallelism: int = 1) -> np.ndarray:
    """Uniform points strictly inside the unit cube."""
    tiny = np.nextafter(0.0, 1.0)

    def draw(rng, m):
        return np.maximum(rng.random((m, p)), tiny)

    return _blocks(n, seed, draw, parallelism).reshape(n, p)


@dataclass(frozen=True)
class ScalingRecord:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    margin: float

    def apply(self, points) -> np.ndarray:
        """Map into ``[margin, 1 - margin]`` using the recorded ranges."""
        pts = np.asarray(points, dtype=float)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return self.margin + (pts - lo) / (hi - lo) * (1.0 - 2.0 * self.margin)


def scale_to_unit(points, margin: float = 1e-6) -> tuple[np.ndarray, ScalingRecord]:
    """Per-coordinate min-max map into ``[margin, 1 - margin]``.

    Strictly increasing in every coordinate, so ranks and medians are kept.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise InsufficientPointsError("need at least two points to scale")
    if not 0.0 < margin < 0.5:
        raise ValueError("margin must lie in (0, 0.5)")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    if np.any(hi <= lo):
        raise DomainError(f"coordinate(s) {np.nonzero(hi <= lo)[0].tolist()} have zero range")
    rec = ScalingRecord(tuple(lo.tolist()), tuple(hi.tolist()), margin)
    return rec.apply(pts), rec


def make_dataset(cfg: ExperimentConfig, rho: float, seed: int) -> np.ndarray:
    """Unit-cube points for one ``(rho, seed)`` cell of a study."""
    if cfg.distribution == "uniform":
        return generate_uniform(cfg.n, cfg.p, seed, cfg.parallelism)
    raw = generate_correlated_normal(cfg.n, cfg.p, rho, seed, cfg.parallelism)
    return scale_to_unit(raw, cfg.margin)[0]


def _sketches(cfg: ExperimentConfig, points: np.ndarray):
    """Yield ``(acc, tensor, report)`` for every grid entry.

    Single-factor entries on the direct route share one sketch at the largest
    order; lower orders are its leading blocks.
    """
    shards = split_into_shards(points, cfg.shards, align=SKETCH_BLOCK)
    direct = [a for a in cfg.accuracy_grid if a.K == 1 and cfg.method in ("auto", "direct")]
    cache = {}
    if direct:
        top = max(direct, key=lambda a: a.J)
        cache[top.J] = sketch_pipeline(shards, top, cfg.p, cfg.parallelism, "direct", SKETCH_BLOCK)
    for acc in cfg.accuracy_grid:
        if acc in direct:
            base, report = next(iter(cache.values()))
            yield acc, truncate(base, acc.J), report
        else:
            tensor, report = sketch_pipeline(shards, acc, cfg.p, cfg.parallelism, cfg.method, SKETCH_BLOCK)
            yield acc, tensor, report


ACCURACY_COLUMNS = [
    "distribution", "rho", "depth", "Jbar", "seed", "n", "ideal_log2",
    "log2_min", "log2_q1", "log2_median", "log2_q3", "log2_max",
    "max_rel_deviation", "mean_rel_deviation", "discarded", "degenerate",
]


def run_accuracy_study(cfg: ExperimentConfig, output=None) -> list[dict]:
    """Leaf log2-count quantiles for every (rho, seed, accuracy, depth).

    One sketch per (rho, seed, accuracy) is reused for all depths.
    """
    rhos = cfg.rho if cfg.distribution == "normal" else [0.0]
    rows = []
    for rho in rhos:
        for seed in cfg.seeds:
            pts = make_dataset(cfg, rho, seed)
            for acc, tensor, _ in _sketches(cfg, pts):
                for D in cfg.depths:
                    tree = build_tree(tensor, D)
                    audit = audit_cells(tree, pts)
                    q = np.quantile(audit.log2_counts, [0.0, 0.25, 0.5, 0.75, 1.0])
                    rows.append({
                        "distribution": cfg.distribution, "rho": rho, "depth": D, "Jbar": str(acc),
                        "seed": seed, "n": cfg.n, "ideal_log2": math.log2(cfg.n / 2**D),
                        "log2_min": q[0], "log2_q1": q[1], "log2_median": q[2], "log2_q3": q[3],
                        "log2_max": q[4], "max_rel_deviation": audit.max_rel_deviation,
                        "mean_rel_deviation": audit.mean_rel_deviation, "discarded": audit.discarded,
                        "degenerate": tree.degenerate_count,
                    })
    if output is not None:
        write_csv(output, rows, ACCURACY_COLUMNS)
    return rows


RUNTIME_COLUMNS = ["phase", "Jbar", "rho", "seed", "depth", "shards", "parallelism", "n", "seconds"]


def run_runtime_study(cfg: ExperimentConfig, output=None) -> list[dict]:
    """Wall-clock per phase: scan, map, reduce, transform, tree, total.

    ``total`` is map + reduce + transform + tree for that depth, with the
    sketch shared across depths.  ``scan`` is the separate min-max pass over
    the data and is not part of ``total``.  A warm-up pipeline run on a small
    prefix is discarded first.
    """
    rhos = cfg.rho if cfg.distribution == "normal" else [0.0]
    rows = []
    warm = False
    for rho in rhos:
        for seed in cfg.seeds:
            if cfg.distribution == "uniform":
                pts, scan = generate_uniform(cfg.n, cfg.p, seed, cfg.parallelism), 0.0
            else:
                raw = generate_correlated_normal(cfg.n, cfg.p, rho, seed, cfg.parallelism)
                t0 = time.perf_counter()
                pts = scale_to_unit(raw, cfg.margin)[0]
                scan = time.perf_counter() - t0
            shards = split_into_shards(pts, cfg.shards, align=SKETCH_BLOCK)
            for acc in cfg.accuracy_grid:
                if not warm:
                    prefix = split_into_shards(pts[: min(len(pts), 20000)], cfg.shards, align=SKETCH_BLOCK)
                    sketch_pipeline(prefix, acc, cfg.p, cfg.parallelism, cfg.method, SKETCH_BLOCK)
                    warm = True
                tensor, rep = sketch_pipeline(shards, acc, cfg.p, cfg.parallelism, cfg.method, SKETCH_BLOCK)
                base = rep.map_seconds + rep.reduce_seconds + rep.extra["transform_seconds"]
                common = {"Jbar": str(acc), "rho": rho, "seed": seed, "shards": cfg.shards,
                          "parallelism": cfg.parallelism, "n": cfg.n}
                for phase, sec in (("scan", scan), ("map", rep.map_seconds), ("reduce", rep.reduce_seconds),
                                   ("transform", rep.extra["transform_seconds"])):
                    rows.append({"phase": phase, "depth": "", "seconds": sec, **common})
                for D in cfg.depths:
                    t0 = time.perf_counter()
                    build_tree(tensor, D)
                    tree_s = time.perf_counter() - t0
                    rows.append({"phase": "tree", "depth": D, "seconds": tree_s, **common})
                    rows.append({"phase": "total", "depth": D, "seconds": base + tree_s, **common})
    if output is not None:
        write_csv(output, rows, RUNTIME_COLUMNS)
    return rows


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})
    return buf.getvalue()


def write_csv(path, rows: list[dict], columns: list[str]) -> None:
    atomic_write(path, rows_to_csv(rows, columns).encode("ascii"))
