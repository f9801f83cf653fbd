import math

import numpy as np
import pytest

from kdsketch.errors import DomainError, InsufficientPointsError
from kdsketch.eval import (
    ACCURACY_COLUMNS,
    ExperimentConfig,
    format_config,
    generate_correlated_normal,
    generate_uniform,
    parse_config,
    rows_to_csv,
    run_accuracy_study,
    run_runtime_study,
    scale_to_unit,
)
from kdsketch.factorized import AccuracyParameter
from kdsketch.tree import exact_leaf_counts


def pair_correlations(x):
    c = np.corrcoef(x, rowvar=False)
    return c[np.triu_indices_from(c, 1)]


@pytest.mark.parametrize("rho", [0.0, 0.75])
def test_sample_correlation(rho):
    x = generate_correlated_normal(100_000, 3, rho, seed=1)
    assert x.shape == (100_000, 3)
    assert np.all(np.abs(pair_correlations(x) - rho) < 0.01)
    assert np.all(np.abs(x.var(axis=0) - 1) < 0.02)


def test_negative_equicorrelation_allowed_above_bound():
    x = generate_correlated_normal(50_000, 3, -0.4, seed=2)
    assert np.all(np.abs(pair_correlations(x) + 0.4) < 0.02)


@pytest.mark.parametrize("rho", [1.0, -0.5, 1.5])
def test_invalid_rho(rho):
    with pytest.raises(DomainError):
        generate_correlated_normal(10, 3, rho, seed=0)


def test_generation_deterministic_and_parallel_invariant():
    a = generate_correlated_normal(600_000, 3, 0.5, seed=7)
    b = generate_correlated_normal(600_000, 3, 0.5, seed=7, parallelism=4)
    np.testing.assert_array_equal(a, b)
    c = generate_correlated_normal(600_000, 3, 0.5, seed=8)
    assert not np.array_equal(a, c)
    u1 = generate_uniform(300_000, 2, seed=3)
    u2 = generate_uniform(300_000, 2, seed=3, parallelism=3)
    np.testing.assert_array_equal(u1, u2)
    assert np.all((u1 > 0) & (u1 < 1))


def test_scale_endpoints():
    out, rec = scale_to_unit(np.array([[0.0], [10.0]]), margin=0.001)
    np.testing.assert_allclose(out[:, 0], [0.001, 0.999], rtol=0, atol=1e-15)
    assert rec.lower == (0.0,) and rec.upper == (10.0,)


def test_scale_preserves_order_and_medians():
    raw = generate_correlated_normal(10_001, 3, 0.5, seed=4)
    out, rec = scale_to_unit(raw)
    assert np.all((out > 0) & (out < 1))
    for l in range(3):
        np.testing.assert_array_equal(np.argsort(raw[:, l], kind="stable"), np.argsort(out[:, l], kind="stable"))
        med_raw = np.sort(raw[:, l])[5000]
        assert rec.apply(np.array([[med_raw] * 3]))[0, l] == np.sort(out[:, l])[5000]


def test_scale_errors():
    with pytest.raises(DomainError):
        scale_to_unit(np.array([[1.0, 2.0], [1.0, 3.0]]))
    with pytest.raises(InsufficientPointsError):
        scale_to_unit(np.array([[1.0]]))


def test_exact_tree_counts_unchanged_by_scaling():
    raw = generate_correlated_normal(20_000, 3, 0.75, seed=5)
    scaled, _ = scale_to_unit(raw)
    for D in (3, 6):
        np.testing.assert_array_equal(exact_leaf_counts(raw, D), exact_leaf_counts(scaled, D))


def test_config_parse_and_round_trip():
    text = """
    # study settings
    n = 5000
    p = 2
    rho = 0, 0.5
    depths = 3,4
    accuracy_grid = 3,5; 8
    seeds = 1,2
    shards = 4
    parallelism = 2
    """
    cfg = parse_config(text)
    assert cfg.n == 5000 and cfg.rho == [0.0, 0.5] and cfg.depths == [3, 4]
    assert cfg.accuracy_grid == [AccuracyParameter((3, 5)), AccuracyParameter((8,))]
    assert cfg.shards == 4 and cfg.parallelism == 2 and cfg.distribution == "normal"
    again = parse_config(format_config(cfg))
    assert again == cfg


@pytest.mark.parametrize("text", ["bogus = 3", "n = lots", "rho = 1.0", "n = 10\ndepths = 5", "p"])
def test_config_errors(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_accuracy_study_uniform_smoke():
    cfg = ExperimentConfig(n=100_000, p=2, depths=[4], accuracy_grid=[AccuracyParameter((32,))],
                           seeds=[1], distribution="uniform")
    rows = run_accuracy_study(cfg)
    assert len(rows) == 1
    assert abs(rows[0]["log2_median"] - math.log2(100_000 / 16)) < 0.05


def test_accuracy_study_reuses_sketch_across_depths_and_is_deterministic(tmp_path):
    cfg = ExperimentConfig(n=20_000, p=2, rho=[0.0, 0.5], depths=[2, 4],
                           accuracy_grid=[AccuracyParameter((2, 2)), AccuracyParameter((8,)), AccuracyParameter((4,))],
                           seeds=[3], shards=3)
    rows = run_accuracy_study(cfg, tmp_path / "a.csv")
    assert len(rows) == 2 * 3 * 2
    text = (tmp_path / "a.csv").read_text()
    assert text.splitlines()[0] == ",".join(ACCURACY_COLUMNS)
    cfg.parallelism = 3
    assert rows_to_csv(run_accuracy_study(cfg), ACCURACY_COLUMNS) == text


def test_larger_accuracy_narrows_interquartile_range():
    cfg = ExperimentConfig(n=300_000, p=3, rho=[0.5], depths=[6],
                           accuracy_grid=[AccuracyParameter((2, 2)), AccuracyParameter((3, 5))], seeds=[1, 2, 3])
    rows = run_accuracy_study(cfg)
    iqr = {}
    for r in rows:
        iqr.setdefault(r["Jbar"], []).append(r["log2_q3"] - r["log2_q1"])
    assert np.median(iqr["3,5"]) < np.median(iqr["2,2"])


def test_runtime_study_rows():
    cfg = ExperimentConfig(n=20_000, p=2, depths=[3, 5], accuracy_grid=[AccuracyParameter((2, 3))], seeds=[1])
    rows = run_runtime_study(cfg)
    phases = [r["phase"] for r in rows]
    assert phases == ["scan", "map", "reduce", "transform", "tree", "total", "tree", "total"]
    assert all(r["seconds"] >= 0 for r in rows)
    by = {(r["phase"], r["depth"]): r["seconds"] for r in rows}
    base = by[("map", "")] + by[("reduce", "")] + by[("transform", "")]
    assert by[("total", 3)] == pytest.approx(base + by[("tree", 3)])
