"""Mean absolute local derivative importance and the Gini baseline.

A fitted outcome model g over the augmented design [X, X~] is probed at
every sample row: numeric features use the per-row partial derivative
(exact when the model exposes gradients, forward differences otherwise),
categorical features use the spread of predictions across their levels
with zero kept in the hull so the score stays baseline-invariant.  The
knockoff statistic is W_j = l_j - l~_j.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..data import ColumnSchema, MixedDataset
from ..forest import REGRESSION, Forest, ForestParams, fit_forest, _predict_matrix
from .base import WStatistics, augmented_encoding, one_hot
from .mlp import Mlp, MlpConfig, fit_mlp, mlp_input_gradients, mlp_predict


class ForestMaldModel:
    """Forest fit on the raw augmented rows; finite differences only."""

    has_exact_gradients = False

    def __init__(self, forest: Forest):
        self.forest = forest

    def predict_rows(self, rows: np.ndarray) -> np.ndarray:
        return _predict_matrix(self.forest, rows)

    def gradients(self, rows: np.ndarray):
        raise NotImplementedError("forests expose no exact input gradients")


class MlpMaldModel:
    """MLP over the one-hot encoded augmented rows; exact gradients.

    ``raw_to_encoded`` maps a raw numeric augmented column to its encoded
    column so gradients can be reported against raw inputs.  Categorical
    level sweeps re-encode the probed rows.
    """

    has_exact_gradients = True

    def __init__(self, mlp: Mlp, schema, raw_numeric_cols, encoded_numeric_cols):
        self.mlp = mlp
        self.schema = tuple(schema)  # schema of the 2p raw augmented columns
        self._raw_cols = np.asarray(raw_numeric_cols, dtype=np.int64)
        self._enc_cols = np.asarray(encoded_numeric_cols, dtype=np.int64)

    def _encode(self, rows: np.ndarray) -> np.ndarray:
        cols = []
        for j, schema in enumerate(self.schema):
            x = rows[:, j]
            if schema.is_categorical:
                cols.append(
                    (x[:, None] == np.arange(2, schema.levels + 1)[None, :]).astype(np.float64)
                )
            else:
                cols.append(x[:, None])
        return np.hstack(cols)

    def predict_rows(self, rows: np.ndarray) -> np.ndarray:
        return mlp_predict(self.mlp, self._encode(rows))

    def gradients(self, rows: np.ndarray) -> np.ndarray:
        enc_grad = mlp_input_gradients(self.mlp, self._encode(rows))
        out = np.zeros((rows.shape[0], len(self.schema)))
        out[:, self._raw_cols] = enc_grad[:, self._enc_cols]
        return out


def default_bandwidth(n: int) -> float:
    return float(n) ** (-1.0 / 5.0)


def _augmented_rows(X: MixedDataset, Xt: MixedDataset) -> np.ndarray:
    if X.schema != Xt.schema:
        raise ValueError("original and knockoff must share a schema")
    return np.hstack([X.values, Xt.values])


def _numeric_scores(model, rows, col, b, base=None):
    """Per-row |local derivative| for one numeric column of the augmented rows."""
    if model.has_exact_gradients:
        return np.abs(model.gradients(rows)[:, col])
    if base is None:
        base = model.predict_rows(rows)
    bumped = rows.copy()
    bumped[:, col] += b
    return np.abs((model.predict_rows(bumped) - base) / b)


def _categorical_scores(model, rows, col, levels):
    """Per-row max-minus-min of predictions over the level sweep, with zero
    included in the hull."""
    preds = np.empty((rows.shape[0], levels))
    probe = rows.copy()
    for k in range(1, levels + 1):
        probe[:, col] = k
        preds[:, k - 1] = model.predict_rows(probe)
    hi = np.maximum(preds.max(axis=1), 0.0)
    lo = np.minimum(preds.min(axis=1), 0.0)
    return hi - lo


def mald_numeric(model, X: MixedDataset, Xt: MixedDataset, j: int, b: Optional[float] = None,
                 r: float = 1.0) -> tuple[float, float]:
    """(l_j, l~_j) for a numeric feature: mean |local derivative|^r of the
    fitted model along the original and the knockoff column."""
    if X.schema[j].is_categorical:
        raise ValueError(f"column {j} is categorical; use mald_categorical")
    if r <= 0:
        raise ValueError("r must be > 0")
    rows = _augmented_rows(X, Xt)
    b = default_bandwidth(X.n) if b is None else float(b)
    if b <= 0 and not model.has_exact_gradients:
        raise ValueError("finite differences need bandwidth b > 0")
    base = None if model.has_exact_gradients else model.predict_rows(rows)
    l = _numeric_scores(model, rows, j, b, base)
    l_ko = _numeric_scores(model, rows, X.p + j, b, base)
    return float(np.mean(l**r)), float(np.mean(l_ko**r))


def mald_categorical(model, X: MixedDataset, Xt: MixedDataset, j: int, r: float = 1.0
                     ) -> tuple[float, float]:
    """(l_j, l~_j) for a categorical feature via the level sweep."""
    schema = X.schema[j]
    if not schema.is_categorical:
        raise ValueError(f"column {j} is numeric; use mald_numeric")
    if r <= 0:
        raise ValueError("r must be > 0")
    rows = _augmented_rows(X, Xt)
    l = _categorical_scores(model, rows, j, schema.levels)
    l_ko = _categorical_scores(model, rows, X.p + j, schema.levels)
    return float(np.mean(l**r)), float(np.mean(l_ko**r))


def fit_mald_model(y, X: MixedDataset, Xt: MixedDataset, backend: str = "forest",
                   forest_params: Optional[ForestParams] = None,
                   mlp_config: Optional[MlpConfig] = None):
    """Fit the outcome model g on (y, [X, X~]) for the requested backend."""
    y = np.asarray(y, dtype=np.float64)
    if backend == "forest":
        schema = list(X.schema) + [
            ColumnSchema(f"{c.name}~ko", c.kind, c.levels) for c in Xt.schema
        ]
        design = MixedDataset(_augmented_rows(X, Xt), schema)
        params = forest_params if forest_params is not None else ForestParams(n_trees=100)
        return ForestMaldModel(fit_forest(design, y, params, REGRESSION))
    if backend == "mlp":
        design, enc, enc_t = augmented_encoding(X, Xt)
        mlp = fit_mlp(y, design, mlp_config if mlp_config is not None else MlpConfig())
        schema = list(X.schema) + [
            ColumnSchema(f"{c.name}~ko", c.kind, c.levels) for c in Xt.schema
        ]
        raw_cols, enc_cols = [], []
        groups = enc.groups + enc_t.groups
        for raw, g in enumerate(groups):
            if not schema[raw].is_categorical:
                raw_cols.append(raw)
                enc_cols.append(g[0])
        return MlpMaldModel(mlp, schema, raw_cols, enc_cols)
    raise ValueError(f"unknown MALD backend {backend!r}")


def mald_statistics(y, X: MixedDataset, Xt: MixedDataset, backend: str = "forest",
                    b: Optional[float] = None, r: float = 1.0,
                    forest_params: Optional[ForestParams] = None,
                    mlp_config: Optional[MlpConfig] = None,
                    model=None) -> WStatistics:
    """W_j = l_j - l~_j with the model refit on the augmented design.

    ``model`` short-circuits fitting when a probe-ready model is supplied.
    """
    if model is None:
        model = fit_mald_model(y, X, Xt, backend, forest_params, mlp_config)
    rows = _augmented_rows(X, Xt)
    bw = default_bandwidth(X.n) if b is None else float(b)
    base = None if model.has_exact_gradients else model.predict_rows(rows)
    grads = np.abs(model.gradients(rows)) if model.has_exact_gradients else None

    w = np.empty(X.p)
    for j, schema in enumerate(X.schema):
        if schema.is_categorical:
            l = _categorical_scores(model, rows, j, schema.levels)
            l_ko = _categorical_scores(model, rows, X.p + j, schema.levels)
        elif grads is not None:
            l, l_ko = grads[:, j], grads[:, X.p + j]
        else:
            l = _numeric_scores(model, rows, j, bw, base)
            l_ko = _numeric_scores(model, rows, X.p + j, bw, base)
        w[j] = np.mean(l**r) - np.mean(l_ko**r)
    seed = None
    if forest_params is not None:
        seed = forest_params.seed
    elif mlp_config is not None:
        seed = mlp_config.seed
    return WStatistics(
        w=w,
        method=f"mald_{backend}",
        names=X.names,
        metadata={"b": bw, "r": r, "seed": seed},
    )


def gini_statistics(y, X: MixedDataset, Xt: MixedDataset,
                    params: Optional[ForestParams] = None) -> WStatistics:
    """Impurity-importance difference on the one-hot encoded augmented
    design, summed over each feature's one-hot group."""
    design, enc, enc_t = augmented_encoding(X, Xt)
    names = [f"c{k}" for k in range(design.shape[1])]
    ds = MixedDataset(design, [ColumnSchema(nm, "numeric") for nm in names])
    params = params if params is not None else ForestParams(n_trees=100)
    forest = fit_forest(ds, np.asarray(y, dtype=np.float64), params, REGRESSION)
    imp = forest.importance_
    w = np.empty(X.p)
    for j in range(X.p):
        w[j] = imp[list(enc.groups[j])].sum() - imp[list(enc_t.groups[j])].sum()
    return WStatistics(
        w=w, method="gini", names=X.names, metadata={"seed": params.seed}
    )
