"""Command-line interface: ``kdsketch <command> [flags]``.

Commands
    sketch           point files (or a generator config) -> sketch files
    transform        write the factorized-to-standard matrix for ``--Jbar``
    build            sketch file -> approximate tree file
    exact            point files -> exact-median tree file
    audit            tree file + point files -> per-leaf CSV
    accuracy-study   config -> accuracy CSV
    runtime-study    config -> runtime CSV

Exit codes: 0 success, 1 usage error, 2 data error, 3 singular transform.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import eval as ev
from .errors import (
    DomainError,
    EmptySketchError,
    InsufficientPointsError,
    ShapeMismatchError,
    SingularTransformError,
)
from .factorized import (
    AccuracyParameter,
    build_transform_1d,
    read_tensor,
    sketch_pipeline,
    write_tensor,
    write_transform,
)
from .io import DataFileError, atomic_write, read_points
from .sketch import SketchTensor, split_into_shards
from .tree import audit_cells, build_exact_tree, build_tree, read_tree, write_tree

__all__ = ["main", "build_parser", "UsageError"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
BLOCK = 1 << 16


class UsageError(Exception):
    """Bad flags; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _jbar(text: str) -> AccuracyParameter:
    try:
        return AccuracyParameter.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {v}")
    return v


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="kdsketch", description="Balanced k-d trees from one-pass trigonometric sketches.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sketch", help="sketch point files or generated data")
    s.add_argument("--input", nargs="+", help="point CSV files, read in order as one stream")
    s.add_argument("--config", help="generator config (instead of --input); needs --seed")
    s.add_argument("--seed", type=int)
    s.add_argument("--output", required=True, help="standard sketch path; FILE.factorized and FILE.transform go beside it")
    s.add_argument("--p", type=_positive)
    s.add_argument("--Jbar", type=_jbar, required=True)
    s.add_argument("--shards", type=_positive, default=1)
    s.add_argument("--parallelism", type=_positive, default=1)
    s.add_argument("--method", choices=("factorized", "direct"), default="factorized")
    s.add_argument("--scale", action="store_true", help="min-max scale inputs into the unit cube first")
    s.add_argument("--encoding", choices=("binary", "csv"), default="binary")

    t = sub.add_parser("transform", help="write the 1-D transform matrix")
    t.add_argument("--Jbar", type=_jbar, required=True)
    t.add_argument("--output", required=True)
    t.add_argument("--encoding", choices=("binary", "csv"), default="binary")

    b = sub.add_parser("build", help="approximate tree from a sketch file")
    b.add_argument("--input", required=True, help="standard sketch file")
    b.add_argument("--depth", type=_positive, required=True)
    b.add_argument("--output", required=True)
    b.add_argument("--p", type=_positive, help="expected dimension (checked against the file)")
    b.add_argument("--Jbar", type=_jbar, help="expected accuracy parameter (checked against the file)")

    e = sub.add_parser("exact", help="exact-median tree from point files")
    e.add_argument("--input", nargs="+", required=True)
    e.add_argument("--depth", type=_positive, required=True)
    e.add_argument("--output", required=True)
    e.add_argument("--p", type=_positive)
    e.add_argument("--scale", action="store_true")

    a = sub.add_parser("audit", help="exact per-leaf counts for a tree")
    a.add_argument("--tree", required=True)
    a.add_argument("--input", nargs="+", required=True)
    a.add_argument("--output", required=True)
    a.add_argument("--p", type=_positive)
    a.add_argument("--scale", action="store_true")

    for name in ("accuracy-study", "runtime-study"):
        st = sub.add_parser(name)
        st.add_argument("--config", required=True)
        st.add_argument("--seed", type=_seeds, required=True, help="seed or comma list; replaces the config's seeds")
        st.add_argument("--output", required=True)
        st.add_argument("--shards", type=_positive)
        st.add_argument("--parallelism", type=_positive)
    return ap


def _load_points(paths, p, scale: bool) -> np.ndarray:
    parts = [read_points(path, p) for path in paths]
    widths = {x.shape[1] for x in parts if len(x)}
    if len(widths) > 1:
        raise ShapeMismatchError(f"input files disagree on dimension: {sorted(widths)}")
    pts = np.concatenate(parts) if parts else np.empty((0, p or 0))
    if len(pts) == 0:
        raise EmptySketchError("no points in input")
    if scale:
        pts = ev.scale_to_unit(pts)[0]
    return pts


def _cmd_sketch(args) -> int:
    if (args.input is None) == (args.config is None):
        raise UsageError("give exactly one of --input or --config")
    if args.config is not None:
        if args.seed is None:
            raise UsageError("--seed is required with --config")
        cfg = ev.load_config(args.config)
        if args.p is not None and args.p != cfg.p:
            raise UsageError(f"--p {args.p} disagrees with config p={cfg.p}")
        pts = ev.make_dataset(cfg, cfg.rho[0], args.seed)
        p = cfg.p
    else:
        pts = _load_points(args.input, args.p, args.scale)
        p = pts.shape[1]
    acc = args.Jbar
    shards = split_into_shards(pts, args.shards, align=BLOCK)
    tensor, rep = sketch_pipeline(shards, acc, p, args.parallelism, args.method, BLOCK)
    write_tensor(args.output, tensor, acc, args.encoding)
    if args.method == "factorized":
        write_tensor(args.output + ".factorized", rep.extra["factorized"], encoding=args.encoding)
        write_transform(args.output + ".transform", rep.extra["transform"], args.encoding)
    print(f"points={tensor.count} reads={rep.reads} shards={rep.shards} method={rep.extra['method']}")
    print(f"map_seconds={rep.map_seconds:.6f} reduce_seconds={rep.reduce_seconds:.6f} "
          f"transform_seconds={rep.extra['transform_seconds']:.6f}")
    return EXIT_OK


def _cmd_transform(args) -> int:
    tf = build_transform_1d(args.Jbar)
    write_transform(args.output, tf, args.encoding)
    print(f"Jbar={args.Jbar} size={args.Jbar.size} method={tf.method} residual={tf.residual:.3e}")
    return EXIT_OK


def _cmd_build(args) -> int:
    t = read_tensor(args.input)
    if not isinstance(t, SketchTensor):
        raise ShapeMismatchError(f"{args.input} is not a standard sketch; pass the main sketch file")
    if args.p is not None and args.p != t.p:
        raise ShapeMismatchError(f"{args.input} has p={t.p}, flags say {args.p}")
    if args.Jbar is not None and args.Jbar.J != t.J:
        raise ShapeMismatchError(f"{args.input} has J={t.J}, flags say Jbar={args.Jbar} (J={args.Jbar.J})")
    t0 = time.perf_counter()
    tree = build_tree(t, args.depth)
    tree.accuracy = args.Jbar or t.J
    write_tree(args.output, tree)
    print(f"depth={args.depth} nodes={len(tree.nodes)} degenerate={tree.degenerate_count} "
          f"seconds={time.perf_counter() - t0:.6f}")
    return EXIT_OK


def _cmd_exact(args) -> int:
    pts = _load_points(args.input, args.p, args.scale)
    tree = build_exact_tree(pts, args.depth)
    write_tree(args.output, tree)
    print(f"depth={args.depth} nodes={len(tree.nodes)} degenerate={tree.degenerate_count}")
    return EXIT_OK


def _cmd_audit(args) -> int:
    tree = read_tree(args.tree)
    pts = _load_points(args.input, args.p, args.scale)
    audit = audit_cells(tree, pts)
    atomic_write(args.output, audit.to_csv().encode("ascii"))
    print(f"n={audit.n} counted={int(audit.counts.sum())} discarded={audit.discarded} "
          f"max_rel_deviation={audit.max_rel_deviation:.6f}")
    return EXIT_OK


def _study_config(args):
    cfg = ev.load_config(args.config)
    cfg.seeds = args.seed
    if args.shards:
        cfg.shards = args.shards
    if args.parallelism:
        cfg.parallelism = args.parallelism
    cfg.validate()
    return cfg


def _cmd_accuracy(args) -> int:
    rows = ev.run_accuracy_study(_study_config(args), args.output)
    print(f"rows={len(rows)}")
    return EXIT_OK


def _cmd_runtime(args) -> int:
    rows = ev.run_runtime_study(_study_config(args), args.output)
    print(f"rows={len(rows)}")
    return EXIT_OK


_COMMANDS = {
    "sketch": _cmd_sketch,
    "transform": _cmd_transform,
    "build": _cmd_build,
    "exact": _cmd_exact,
    "audit": _cmd_audit,
    "accuracy-study": _cmd_accuracy,
    "runtime-study": _cmd_runtime,
}

_DATA_ERRORS = (
    DataFileError,
    DomainError,
    ShapeMismatchError,
    EmptySketchError,
    InsufficientPointsError,
    OSError,
    ValueError,
)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"kdsketch: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SingularTransformError as exc:
        print(f"kdsketch: singular transform: {exc} (try --method direct)", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"kdsketch: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
