import math

import numpy as np
import pytest

from hetknockoffs.data import ColumnSchema, MixedDataset, numeric_schema
from hetknockoffs.evaluation import age_transform, cv_ols_mse


def test_age_transform_hand_values():
    assert abs(age_transform(0.94)) < 1e-12  # log(1.00)
    # continuity at the knot: both branches give log(1.26)
    assert abs(age_transform(1.2) - math.log(1.26)) < 1e-12
    assert abs(age_transform(1.2 - 1e-13) - math.log(1.26)) < 1e-9
    # one unit of slope past the knot
    assert abs(age_transform(2.2) - (1.0 / 1.26 + math.log(1.26))) < 1e-12
    assert abs(age_transform(2.46) - ((2.46 - 1.2) / 1.26 + math.log(1.26))) < 1e-12


def test_age_transform_monotone_on_grid():
    grid = np.linspace(0.0, 30.0, 10_000)
    out = age_transform(grid)
    assert np.all(np.diff(out) > 0)


def test_age_transform_rejects_negative():
    with pytest.raises(ValueError):
        age_transform(-0.1)
    with pytest.raises(ValueError):
        age_transform(np.array([1.0, -2.0]))


def test_cv_exact_linear_interpolates():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((200, 3))
    y = X @ [1.0, -2.0, 0.5] + 4.0
    report = cv_ols_mse(X, y, k=10, seed=1)
    assert all(m < 1e-10 for m in report.fold_mses)
    assert report.k == 10


def test_cv_empty_selection_is_intercept_only():
    rng = np.random.default_rng(1)
    y = rng.standard_normal(400) * 3.0 + 1.0
    report = cv_ols_mse(np.empty((400, 0)), y, k=10, seed=2)
    assert abs(report.mean_mse - y.var()) < 0.25 * y.var()


def test_cv_noise_column_changes_mse_within_band():
    rng = np.random.default_rng(2)
    n = 1000
    X = rng.standard_normal((n, 2))
    y = X @ [1.0, -1.0] + rng.standard_normal(n)
    base = cv_ols_mse(X, y, k=10, seed=3).mean_mse
    with_noise = cv_ols_mse(np.column_stack([X, rng.standard_normal(n)]), y, k=10, seed=3).mean_mse
    assert with_noise <= base + 0.05 * y.var()


def test_cv_mean_is_mean_of_folds_and_partition_covers_rows():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((57, 2))
    y = rng.standard_normal(57)
    report = cv_ols_mse(X, y, k=5, seed=4)
    assert abs(report.mean_mse - np.mean(report.fold_mses)) < 1e-15
    # fold sizes differ by at most one: 57 = 2 folds of 12 + 3 of 11
    sizes = [57 // 5 + (1 if i < 57 % 5 else 0) for i in range(5)]
    assert sum(sizes) == 57 and max(sizes) - min(sizes) == 1


def test_cv_fold_partition_is_seeded():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((80, 2))
    y = rng.standard_normal(80)
    a = cv_ols_mse(X, y, k=4, seed=7)
    b = cv_ols_mse(X, y, k=4, seed=7)
    c = cv_ols_mse(X, y, k=4, seed=8)
    assert a.fold_mses == b.fold_mses
    assert a.fold_mses != c.fold_mses


def test_cv_one_hot_encodes_categoricals():
    rng = np.random.default_rng(5)
    n = 150
    g = rng.integers(1, 4, n).astype(float)
    x = rng.standard_normal(n)
    # exact function of the level and the numeric column
    y = np.choose(g.astype(int) - 1, [0.0, 2.0, -1.0]) + 0.5 * x
    ds = MixedDataset(
        np.column_stack([x, g]),
        [ColumnSchema("x", "numeric"), ColumnSchema("g", "categorical", 3)],
    )
    report = cv_ols_mse(ds, y, k=5, seed=6)
    assert report.mean_mse < 1e-10


def test_cv_rejects_overwide_designs():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((20, 19))
    y = rng.standard_normal(20)
    with pytest.raises(ValueError):
        cv_ols_mse(X, y, k=10, seed=0)
    with pytest.raises(ValueError):
        cv_ols_mse(X[:, :2], y, k=1, seed=0)


def test_cv_selected_subset_of_mixed_dataset():
    rng = np.random.default_rng(7)
    n = 100
    ds = MixedDataset(rng.standard_normal((n, 4)), numeric_schema(["a", "b", "c", "d"]))
    y = 2.0 * ds.values[:, 1]
    report = cv_ols_mse(ds, y, k=5, seed=8, selected=[1])
    assert report.selected == (1,)
    assert report.mean_mse < 1e-12
