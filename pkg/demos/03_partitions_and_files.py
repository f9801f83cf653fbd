"""Partition invariance, merging, and the on-disk formats.

Sketches of disjoint shards add, so any sharding gives the same statistics
up to rounding; with block-aligned shards the result is bitwise identical.
The same pipeline is reachable from the ``kdsketch`` command (see README).

Run:  python3 demos/03_partitions_and_files.py
"""

import tempfile
from pathlib import Path

import numpy as np

from kdsketch import AccuracyParameter, build_tree, merge, sketch_shard, standardize
from kdsketch.factorized import read_tensor, sketch_pipeline, write_tensor
from kdsketch.eval import generate_uniform
from kdsketch.sketch import split_into_shards
from kdsketch.tree import read_tree, write_tree

pts = generate_uniform(300_000, 2, seed=3)
J = 24

whole = standardize(sketch_shard(pts, J, 2))
halves = [sketch_shard(s.points, J, 2) for s in split_into_shards(pts, 2)]
merged = standardize(merge(*halves))
print(f"whole vs merged halves: max diff {np.abs(whole.values - merged.values).max():.2e}")

acc = AccuracyParameter((2, 3))
ref = None
for R, par in ((1, 1), (4, 2), (16, 8)):
    t, rep = sketch_pipeline(split_into_shards(pts, R, align=4096), acc, 2, par, block_size=4096)
    ref = t.values if ref is None else ref
    print(f"R={R:2d} parallelism={par}: reads {rep.reads}, identical to R=1: {np.array_equal(t.values, ref)}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "uniform.sketch"
    write_tensor(path, t, acc)
    print("\nsketch header:", path.read_bytes().split(b"\n", 1)[0].decode())
    back = read_tensor(path)
    tree = build_tree(back, 3)
    write_tree(Path(tmp) / "uniform.tree", tree)
    print((Path(tmp) / "uniform.tree").read_text())
    assert [n.split_value for n in read_tree(Path(tmp) / "uniform.tree").nodes] == [n.split_value for n in tree.nodes]
