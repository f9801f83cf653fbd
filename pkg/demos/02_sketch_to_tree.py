"""From correlated data to a balanced k-d tree with a single pass.

The data are equicorrelated normals scaled into the unit cube.  One pass
computes the cost-reduced statistics, a fixed matrix turns them into the
standard sketch, and every median of the depth-D tree is then solved from the
sketch alone.  The exact-median tree is the reference.

Run:  python3 demos/02_sketch_to_tree.py
"""

import time

import numpy as np

from kdsketch import AccuracyParameter, audit_cells, build_exact_tree, build_tree, sketch_pipeline
from kdsketch.eval import generate_correlated_normal, scale_to_unit
from kdsketch.sketch import split_into_shards

n, p, rho, D = 500_000, 3, 0.5, 6
acc = AccuracyParameter((3, 5))

raw = generate_correlated_normal(n, p, rho, seed=1)
pts, scaling = scale_to_unit(raw)
print(f"{n} points, p={p}, rho={rho}; scaled ranges {np.round(scaling.lower, 2)} .. {np.round(scaling.upper, 2)}")

t0 = time.perf_counter()
sketch, report = sketch_pipeline(split_into_shards(pts, 8), acc, p, parallelism=4)
print(f"sketch: Jbar=({acc}) J={acc.J}, {sketch.values.size} statistics, "
      f"map {report.map_seconds:.2f}s, reduce {report.reduce_seconds:.4f}s, "
      f"transform ({report.extra['transform'].method}) {report.extra['transform_seconds']:.4f}s, reads {report.reads}")

t0 = time.perf_counter()
tree = build_tree(sketch, D)
print(f"tree: {len(tree.nodes)} medians in {time.perf_counter() - t0:.2f}s, degenerate nodes: {tree.degenerate_count}")

root = tree.nodes[0]
print(f"root splits coordinate {root.axis + 1} at {root.split_value:.5f} "
      f"(exact median {np.sort(pts[:, 0])[(n + 1) // 2 - 1]:.5f})")

approx = audit_cells(tree, pts)
exact = audit_cells(build_exact_tree(pts, D), pts)
ideal = n / 2**D
for name, audit in (("sketch tree", approx), ("exact tree", exact)):
    q = np.quantile(audit.log2_counts, [0, 0.25, 0.5, 0.75, 1])
    print(f"{name:12s} log2 counts min/q1/med/q3/max: " + " ".join(f"{v:.3f}" for v in q)
          + f"  (ideal {np.log2(ideal):.3f}), max rel dev {audit.max_rel_deviation:.4f}")
