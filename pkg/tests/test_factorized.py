import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kdsketch.basis import Neighborhood, c_vector
from kdsketch.errors import DomainError, ShapeMismatchError, SingularTransformError
from kdsketch.factorized import (
    AccuracyParameter,
    FactorizedTensor,
    TrigCounter,
    build_transform_1d,
    factorized_basis_1d,
    factorized_point_basis,
    map_reduce_build_factorized,
    read_tensor,
    read_transform,
    recover_standard,
    sketch_pipeline,
    sketch_shard_factorized,
    transform_nodes,
    write_tensor,
    write_transform,
)
from kdsketch.sketch import (
    Shard,
    approx_count,
    map_reduce_build,
    merge,
    sketch_shard,
    split_into_shards,
    standardize,
)


def uniform(n, p, seed):
    return np.random.default_rng(seed).uniform(1e-6, 1 - 1e-6, (n, p))


def chebyshev_transform(J):
    """Change of basis from the recurrences T_{n+1} = 2cT_n - T_{n-1}, U likewise.

    cos((2j-1)z) = T_{2j-1}(cos z) only has odd powers cos^{2i-1} (slot 2i-1);
    sin((2j-1)z) = sin z * U_{2j-2}(cos z) only even powers, sin*cos^{2i-2} (slot 2i).
    """
    deg = 2 * J
    T = [np.zeros(deg + 1) for _ in range(deg + 1)]
    U = [np.zeros(deg + 1) for _ in range(deg + 1)]
    T[0][0] = 1.0
    T[1][1] = 1.0
    U[0][0] = 1.0
    U[1][1] = 2.0
    for n in range(1, deg):
        T[n + 1] = 2 * np.roll(T[n], 1) - T[n - 1]
        U[n + 1] = 2 * np.roll(U[n], 1) - U[n - 1]
    A = np.zeros((2 * J + 1, 2 * J + 1))
    A[0, 0] = 1.0
    for j in range(1, J + 1):
        for i in range(1, J + 1):
            A[2 * j - 1, 2 * i - 1] = T[2 * j - 1][2 * i - 1]
            A[2 * j, 2 * i] = U[2 * j - 2][2 * i - 2]
    return A


def test_accuracy_parameter_basics():
    acc = AccuracyParameter.parse("3,5")
    assert acc.parts == (3, 5) and acc.K == 2 and acc.J == 15
    assert acc.size == 31
    assert acc.prefixes == (3,)
    assert AccuracyParameter((2, 3, 4)).prefixes == (2, 6)
    assert str(acc) == "3,5"
    for bad in ("", "0", "3,-1", "a,b"):
        with pytest.raises(ValueError):
            AccuracyParameter.parse(bad)


def test_cardinality_matches_standard_basis():
    rng = np.random.default_rng(0)
    for _ in range(20):
        parts = tuple(int(v) for v in rng.integers(1, 5, rng.integers(1, 4)))
        acc = AccuracyParameter(parts)
        z = np.array([0.3])
        assert factorized_basis_1d(z, acc).shape[-1] == 2 * acc.J + 1 == acc.size


def test_single_factor_order_one_is_standard_basis():
    z = 0.37
    v = factorized_basis_1d(np.array(z), AccuracyParameter((1,)))
    np.testing.assert_allclose(v, [1.0, math.cos(z), math.sin(z)], rtol=0, atol=1e-15)


def test_two_factor_entry_formula():
    acc = AccuracyParameter((3, 5))
    v = factorized_basis_1d(np.array(0.4), acc)
    # j1 = 2, j2 = 3, j1 outermost
    pos = 1 + (2 - 1) * 5 + (3 - 1)
    assert v[pos] == pytest.approx(math.sin(0.4) * math.cos(2.4) ** 2, abs=1e-14)
    assert v[0] == 1.0


def test_three_factor_entry_formula():
    acc = AccuracyParameter((2, 3, 2))
    z = 0.61
    v = factorized_basis_1d(np.array(z), acc)
    j1, j2, j3 = 3, 2, 2
    pos = 1 + ((j1 - 1) * 3 + (j2 - 1)) * 2 + (j3 - 1)
    expect = math.cos(z) ** 3 * math.cos(2 * 2 * z) ** (j2 - 1) * math.cos(2 * 6 * z) ** (j3 - 1)
    assert v[pos] == pytest.approx(expect, abs=1e-14)


def test_trig_budget_per_point():
    acc = AccuracyParameter((3, 5))
    trig = TrigCounter()
    factorized_point_basis((0.2, 0.5, 0.9), acc, trig)
    assert trig.cos == 3 * 2


def test_basis_rejects_outside_unit_interval():
    with pytest.raises(DomainError):
        factorized_basis_1d(np.array([0.0]), AccuracyParameter((2,)))


def test_transform_nodes_inside_unit_interval():
    z = transform_nodes(31)
    assert np.all((z > 0) & (z < 1))
    assert len(np.unique(z)) == 31


@pytest.mark.parametrize("J", [1, 2, 3, 4])
def test_single_factor_transform_is_chebyshev_change_of_basis(J):
    tf = build_transform_1d(AccuracyParameter((J,)))
    np.testing.assert_allclose(tf.matrix, chebyshev_transform(J), rtol=0, atol=1e-8)


def test_order_one_transform_is_identity():
    tf = build_transform_1d(AccuracyParameter((1,)))
    np.testing.assert_allclose(tf.matrix, np.eye(3), rtol=0, atol=1e-12)


@pytest.mark.parametrize("parts", [(2, 2), (3, 5), (3, 5, 2), (2, 3, 2), (8,), (4, 4)])
def test_transform_residual_on_held_out_grid(parts):
    acc = AccuracyParameter(parts)
    tf = build_transform_1d(acc)
    np.testing.assert_array_equal(tf.matrix[0], np.eye(acc.size)[0])
    z = np.linspace(0, 1, 1002)[1:-1]
    err = np.abs(c_vector(z, acc.J) - tf.apply(factorized_basis_1d(z, acc))).max()
    assert err < 1e-8
    z50 = np.random.default_rng(1).uniform(1e-3, 1 - 1e-3, 50)
    assert np.abs(c_vector(z50, acc.J) - tf.apply(factorized_basis_1d(z50, acc))).max() < 1e-8


def test_transform_fails_loudly_when_unfittable():
    with pytest.raises(SingularTransformError):
        build_transform_1d(AccuracyParameter((40,)))


def test_recover_identity_for_order_one():
    pts = uniform(50, 1, 2)
    acc = AccuracyParameter((1,))
    ft = standardize(sketch_shard_factorized(pts, acc, 1))
    st_ = recover_standard(ft, build_transform_1d(acc))
    np.testing.assert_allclose(st_.values, ft.values, rtol=0, atol=1e-12)


def test_single_point_order_one_matches_standard():
    pts = np.array([[0.3]])
    ft = sketch_shard_factorized(pts, AccuracyParameter((1,)), 1)
    np.testing.assert_allclose(ft.values, sketch_shard(pts, 1, 1).values, rtol=0, atol=1e-15)


@pytest.mark.parametrize("p", [2, 3])
def test_recovered_tensor_matches_direct(p):
    pts = uniform(1000, p, 3)
    acc = AccuracyParameter((3, 5))
    ft = standardize(sketch_shard_factorized(pts, acc, p))
    rec = recover_standard(ft, build_transform_1d(acc))
    direct = standardize(sketch_shard(pts, 15, p))
    assert rec.values.flat[0] == pytest.approx(1.0, abs=1e-12)
    assert np.abs(rec.values - direct.values).max() < 1e-8


def test_recover_is_linear():
    acc = AccuracyParameter((2, 3))
    tf = build_transform_1d(acc)
    a = sketch_shard_factorized(uniform(100, 2, 4), acc, 2)
    b = sketch_shard_factorized(uniform(150, 2, 5), acc, 2)
    lhs = recover_standard(merge(a, b), tf).values
    rhs = merge(recover_standard(a, tf), recover_standard(b, tf)).values
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(lhs).max())


def test_recover_shape_mismatch():
    ft = FactorizedTensor.zeros(AccuracyParameter((2, 2)), 2)
    with pytest.raises(ShapeMismatchError):
        recover_standard(ft, build_transform_1d(AccuracyParameter((3,))))


def test_factorized_partition_invariance():
    pts = uniform(5000, 2, 6)
    acc = AccuracyParameter((2, 3))
    ref, _ = map_reduce_build_factorized(split_into_shards(pts, 1), acc, 2)
    for R, par in [(4, 1), (16, 4)]:
        t, rep = map_reduce_build_factorized(split_into_shards(pts, R), acc, 2, parallelism=par)
        assert rep.reads == len(pts)
        assert np.abs(t.values - ref.values).max() <= 1e-12


def test_trig_budget_during_sketching():
    pts = uniform(1000, 3, 7)
    trig = TrigCounter()
    map_reduce_build_factorized(split_into_shards(pts, 4), AccuracyParameter((3, 5)), 3, trig=trig)
    assert trig.cos == 1000 * 3 * 2


@pytest.mark.parametrize("parts,p", [((3, 5), 2), ((3, 5), 3), ((2, 2, 2), 3), ((4, 3), 2)])
def test_end_to_end_counts_match_direct(parts, p):
    acc = AccuracyParameter(parts)
    pts = uniform(10_000, p, 8)
    shards = split_into_shards(pts, 4)
    fac, _ = sketch_pipeline(shards, acc, p, method="factorized")
    direct, _ = sketch_pipeline(shards, acc, p, method="direct")
    rng = np.random.default_rng(9)
    for _ in range(25):
        lo = rng.uniform(0, 0.7, p)
        hi = np.minimum(lo + rng.uniform(0.05, 0.6, p), 1.0)
        nb = Neighborhood(tuple(lo), tuple(hi))
        assert abs(approx_count(fac, nb) - approx_count(direct, nb)) < 1e-7


@settings(max_examples=20, deadline=None)
@given(parts=st.lists(st.integers(1, 4), min_size=1, max_size=3), z=st.floats(1e-4, 1 - 1e-4))
def test_basis_equivalence_at_random_points(parts, z):
    acc = AccuracyParameter(tuple(parts))
    tf = build_transform_1d(acc)
    v = tf.apply(factorized_basis_1d(np.array([z]), acc))
    assert np.abs(v - c_vector(np.array([z]), acc.J)).max() < 1e-8


def _naive_standard_sketch(points, J):
    # one trigonometric evaluation per index and coordinate, no reuse
    n, p = points.shape
    out = np.zeros((2 * J + 1,) * p)
    for idx in np.ndindex(*out.shape):
        term = np.ones(n)
        for l, j in enumerate(idx):
            if j == 0:
                continue
            k = 2 * ((j + 1) // 2) - 1
            term = term * (np.cos(k * points[:, l]) if j % 2 else np.sin(k * points[:, l]))
        out[idx] = term.sum()
    return out


def test_factorized_faster_than_per_index_evaluation():
    pts = uniform(2000, 3, 10)
    acc = AccuracyParameter((3, 5))
    t0 = time.perf_counter()
    fac = sketch_shard_factorized(pts, acc, 3)
    t_fac = time.perf_counter() - t0
    t0 = time.perf_counter()
    naive = _naive_standard_sketch(pts, 15)
    t_naive = time.perf_counter() - t0
    assert t_fac < t_naive
    rec = recover_standard(standardize(fac), build_transform_1d(acc))
    assert np.abs(rec.values - naive / len(pts)).max() < 1e-8


def test_pipeline_routes():
    pts = uniform(500, 2, 11)
    shards = split_into_shards(pts, 2)
    _, rep = sketch_pipeline(shards, AccuracyParameter((3, 5)), 2)
    assert rep.extra["method"] == "factorized"
    _, rep = sketch_pipeline(shards, AccuracyParameter((20,)), 2)
    assert rep.extra["method"] == "direct"
    with pytest.raises(ValueError):
        sketch_pipeline(shards, AccuracyParameter((2,)), 2, method="magic")


@pytest.mark.parametrize("encoding", ["binary", "csv"])
def test_transform_and_tensor_round_trip(tmp_path, encoding):
    acc = AccuracyParameter((2, 3))
    tf = build_transform_1d(acc)
    write_transform(tmp_path / "t", tf, encoding)
    back = read_transform(tmp_path / "t")
    assert back.acc == acc
    np.testing.assert_array_equal(back.matrix, tf.matrix)

    ft, _ = map_reduce_build_factorized(split_into_shards(uniform(100, 2, 12), 1), acc, 2)
    write_tensor(tmp_path / "f", ft, encoding=encoding)
    ft2 = read_tensor(tmp_path / "f")
    assert isinstance(ft2, FactorizedTensor) and ft2.acc == acc and ft2.count == 100
    np.testing.assert_array_equal(ft2.values, ft.values)

    st_ = recover_standard(ft, tf)
    write_tensor(tmp_path / "s", st_, acc, encoding)
    st2 = read_tensor(tmp_path / "s")
    assert st2.J == 6 and st2.p == 2 and st2.standardized
    np.testing.assert_array_equal(st2.values, st_.values)
    with pytest.raises(ShapeMismatchError):
        read_tensor(tmp_path / "t")
