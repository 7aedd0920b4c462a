import numpy as np
import pytest
from scipy import stats

from hetknockoffs.data import (
    ColumnSchema,
    KnockoffMatrix,
    MixedDataset,
    Provenance,
    numeric_schema,
    swap_columns,
)
from hetknockoffs.forest import ForestParams
from hetknockoffs.importance import MlpConfig
from hetknockoffs.importance.mald import (
    default_bandwidth,
    gini_statistics,
    mald_categorical,
    mald_numeric,
    mald_statistics,
)
from hetknockoffs.knockoffs import second_order_knockoffs


class LinearOracle:
    """g(rows) = slope * rows[:, col]; no exact gradients exposed."""

    has_exact_gradients = False

    def __init__(self, col, slope):
        self.col, self.slope = col, slope

    def predict_rows(self, rows):
        return self.slope * rows[:, self.col]


class QuadOracle:
    has_exact_gradients = True

    def __init__(self, col, width):
        self.col, self.width = col, width

    def predict_rows(self, rows):
        return rows[:, self.col] ** 2

    def gradients(self, rows):
        g = np.zeros((rows.shape[0], self.width))
        g[:, self.col] = 2.0 * rows[:, self.col]
        return g


class LevelLookup:
    has_exact_gradients = False

    def __init__(self, col, mapping):
        self.col, self.mapping = col, mapping

    def predict_rows(self, rows):
        return np.array([self.mapping[v] for v in rows[:, self.col]])


def numeric_pair(n, p, seed):
    rng = np.random.default_rng(seed)
    ds = MixedDataset(rng.standard_normal((n, p)), numeric_schema([f"x{j}" for j in range(p)]))
    kt = second_order_knockoffs(ds, seed=seed + 1)
    return ds, kt


def test_linear_oracle_reduces_to_slope_power():
    ds, kt = numeric_pair(60, 3, seed=0)
    model = LinearOracle(1, 3.0)
    for b in (1e-3, 0.1, 1.0):
        for r in (1.0, 2.0):
            l, l_ko = mald_numeric(model, ds, kt, 1, b=b, r=r)
            assert l == pytest.approx(3.0**r, abs=1e-9)
            assert l_ko == pytest.approx(0.0, abs=1e-12)


def test_quadratic_exact_gradient_hand_value():
    ds = MixedDataset(np.array([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]), numeric_schema(["a", "b"]))
    kt = KnockoffMatrix(np.zeros((3, 2)), ds.schema, Provenance("f", 0))
    l, _ = mald_numeric(QuadOracle(0, 4), ds, kt, 0, r=1.0)
    assert l == pytest.approx(4.0 / 3.0, abs=1e-12)


def test_default_bandwidth_rule():
    assert default_bandwidth(1024) == pytest.approx(1024 ** (-0.2))


def test_mald_numeric_validation():
    ds, kt = numeric_pair(30, 2, seed=1)
    with pytest.raises(ValueError):
        mald_numeric(LinearOracle(0, 1.0), ds, kt, 0, b=-1.0)
    with pytest.raises(ValueError):
        mald_numeric(LinearOracle(0, 1.0), ds, kt, 0, r=0.0)


def cat_pair(n, seed):
    rng = np.random.default_rng(seed)
    schema = [ColumnSchema("g", "categorical", 3), ColumnSchema("x", "numeric")]
    ds = MixedDataset(
        np.column_stack([rng.integers(1, 4, n), rng.standard_normal(n)]), schema
    )
    kt = KnockoffMatrix(
        np.column_stack([rng.integers(1, 4, n), rng.standard_normal(n)]),
        schema,
        Provenance("f", 0),
    )
    return ds, kt


def test_categorical_hull_includes_zero():
    ds, kt = cat_pair(12, seed=2)
    # predictions spread across zero: 2 - (-1) = 3
    l, _ = mald_categorical(LevelLookup(0, {1.0: 2.0, 2.0: -1.0, 3.0: 0.5}), ds, kt, 0)
    assert l == pytest.approx(3.0, abs=1e-12)
    # all positive: zero becomes the min, 2 - 0 = 2
    l, _ = mald_categorical(LevelLookup(0, {1.0: 1.0, 2.0: 2.0, 3.0: 2.0}), ds, kt, 0)
    assert l == pytest.approx(2.0, abs=1e-12)


def test_categorical_requires_categorical_column():
    ds, kt = cat_pair(12, seed=3)
    with pytest.raises(ValueError):
        mald_categorical(LevelLookup(0, {}), ds, kt, 1)
    with pytest.raises(ValueError):
        mald_numeric(LinearOracle(0, 1.0), ds, kt, 0)


def test_model_ignoring_categorical_gives_balanced_scores():
    # fit on data whose column 0 is pure noise: centered predictions make
    # both sides' scores small and nearly equal
    rng = np.random.default_rng(4)
    n = 400
    schema = [ColumnSchema("g", "categorical", 3), ColumnSchema("x", "numeric")]
    g = rng.integers(1, 4, n).astype(float)
    x = rng.standard_normal(n)
    y = 2.0 * x + 0.3 * rng.standard_normal(n)  # y centered, ignores g
    ds = MixedDataset(np.column_stack([g, x]), schema)
    kt = KnockoffMatrix(
        np.column_stack([rng.integers(1, 4, n), rng.standard_normal(n)]),
        schema,
        Provenance("f", 0),
    )
    w = mald_statistics(
        y - y.mean(), ds, kt, backend="forest",
        forest_params=ForestParams(n_trees=60, min_node_size=40, seed=5),
    )
    assert abs(w.w[0]) < 0.25


def test_mald_forest_planted_feature_ranks_first():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(3000 + seed)
        n, p = 1000, 20
        X = rng.standard_normal((n, p))
        ds = MixedDataset(X, numeric_schema([f"x{j}" for j in range(p)]))
        kt = second_order_knockoffs(ds, seed=seed)
        y = 5.0 * X[:, 7] + rng.standard_normal(n)
        w = mald_statistics(
            y, ds, kt, backend="forest",
            forest_params=ForestParams(n_trees=50, min_node_size=10, seed=seed),
        )
        hits += int(np.argmax(w.w)) == 7
    assert hits >= 18  # 90% of 20 seeded runs


def test_mald_null_scores_are_sign_balanced():
    pos = total = 0
    for seed in range(20):
        rng = np.random.default_rng(4000 + seed)
        n, p = 250, 40
        X = rng.standard_normal((n, p))
        ds = MixedDataset(X, numeric_schema([f"x{j}" for j in range(p)]))
        kt = second_order_knockoffs(ds, seed=seed)
        y = rng.standard_normal(n)  # independent of everything
        w = mald_statistics(
            y, ds, kt, backend="forest",
            forest_params=ForestParams(n_trees=30, min_node_size=20, seed=seed),
        )
        nz = w.w[w.w != 0.0]
        pos += int((nz > 0).sum())
        total += nz.size
    test = stats.binomtest(pos, total, 0.5)
    assert test.pvalue > 0.01


def test_mald_swap_flips_sign_of_planted_feature():
    flips = 0
    for seed in range(20):
        rng = np.random.default_rng(5000 + seed)
        n, p = 400, 8
        X = rng.standard_normal((n, p))
        ds = MixedDataset(X, numeric_schema([f"x{j}" for j in range(p)]))
        kt = second_order_knockoffs(ds, seed=seed)
        y = 5.0 * X[:, 2] + rng.standard_normal(n)
        params = ForestParams(n_trees=40, min_node_size=20, seed=seed)
        w = mald_statistics(y, ds, kt, backend="forest", forest_params=params)
        dss, kts = swap_columns(ds, kt, [2])
        ws = mald_statistics(y, dss, kts, backend="forest", forest_params=params)
        flips += (w.w[2] > 0) and (ws.w[2] < 0)
    assert flips == 20


def test_mald_mlp_backend_finds_signal_and_flips():
    rng = np.random.default_rng(6)
    n, p = 400, 6
    X = rng.standard_normal((n, p))
    ds = MixedDataset(X, numeric_schema([f"x{j}" for j in range(p)]))
    kt = second_order_knockoffs(ds, seed=3)
    y = 4.0 * X[:, 1] + rng.standard_normal(n)
    cfg = MlpConfig(epochs=200, seed=9)
    w = mald_statistics(y, ds, kt, backend="mlp", mlp_config=cfg)
    assert int(np.argmax(w.w)) == 1
    dss, kts = swap_columns(ds, kt, [1])
    ws = mald_statistics(y, dss, kts, backend="mlp", mlp_config=cfg)
    assert ws.w[1] < 0


def test_mald_mixed_categorical_signal():
    rng = np.random.default_rng(7)
    n = 600
    schema = [ColumnSchema("g", "categorical", 3), ColumnSchema("x", "numeric")]
    g = rng.integers(1, 4, n).astype(float)
    x = rng.standard_normal(n)
    y = np.choose(g.astype(int) - 1, [-3.0, 0.0, 3.0]) + 0.5 * rng.standard_normal(n)
    ds = MixedDataset(np.column_stack([g, x]), schema)
    kt = KnockoffMatrix(
        np.column_stack([rng.integers(1, 4, n), rng.standard_normal(n)]),
        schema,
        Provenance("f", 0),
    )
    w = mald_statistics(
        y, ds, kt, backend="forest",
        forest_params=ForestParams(n_trees=60, min_node_size=20, seed=8),
    )
    assert w.w[0] > 0.5
    # one W entry per feature, not per level
    assert w.w.shape == (2,)


# ------------------------------------------------------------------- gini

def test_gini_unused_feature_zero_importance():
    rng = np.random.default_rng(9)
    n = 300
    X = np.column_stack([rng.standard_normal(n), np.full(n, 1.0)])
    ds = MixedDataset(X, numeric_schema(["a", "b"]))
    kt = KnockoffMatrix(
        np.column_stack([rng.standard_normal(n), np.full(n, 1.0)]),
        ds.schema,
        Provenance("f", 0),
    )
    y = X[:, 0] + 0.1 * rng.standard_normal(n)
    w = gini_statistics(y, ds, kt, ForestParams(n_trees=30, min_node_size=20, seed=10))
    assert w.w[1] == 0.0


def test_gini_identical_copy_knockoff_balances():
    rng = np.random.default_rng(10)
    n = 500
    x = rng.standard_normal(n)
    ds = MixedDataset(np.column_stack([x, rng.standard_normal(n)]), numeric_schema(["a", "b"]))
    kt = KnockoffMatrix(ds.values.copy(), ds.schema, Provenance("f", 0))  # X~ = X exactly
    y = 2.0 * x + rng.standard_normal(n)
    w = gini_statistics(y, ds, kt, ForestParams(n_trees=60, min_node_size=20, seed=11))
    scale = abs(w.w).max() + 1e-12
    assert abs(w.w[0]) < 0.35 * max(scale, 1.0)


def test_gini_planted_signal_positive():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(6000 + seed)
        n, p = 400, 6
        X = rng.standard_normal((n, p))
        ds = MixedDataset(X, numeric_schema([f"x{j}" for j in range(p)]))
        kt = second_order_knockoffs(ds, seed=seed)
        y = 4.0 * X[:, 3] + rng.standard_normal(n)
        w = gini_statistics(y, ds, kt, ForestParams(n_trees=40, min_node_size=20, seed=seed))
        hits += w.w[3] > 0
    assert hits >= 18
