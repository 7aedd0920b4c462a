"""Random forests for mixed numeric/categorical features.

Regression trees split on variance reduction, classification trees on Gini
impurity.  Categorical features use the ordered-subset trick: levels are
ranked by mean response (regression) or first-class rate (classification)
and cut points are scanned along that ranking, so a split is a level
subset rather than a threshold.  Each tree's bootstrap and candidate
draws come from a counter-based stream keyed by (seed, tree index),
making fits bit-reproducible and independent of any parallel schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._rng import keyed_rng
from .data import MixedDataset
from .errors import SchemaError

REGRESSION = "regression"
CLASSIFICATION = "classification"

_GAIN_TOL = 1e-12


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters; ``None`` fields fall back to task defaults.

    Defaults follow the usual forest conventions: 500 trees, mtry of
    floor(sqrt(p)) for classification and floor(p/3) for regression, and a
    minimum node size of 1 (classification) or 5 (regression).
    """

    n_trees: int = 500
    mtry: Optional[int] = None
    min_node_size: Optional[int] = None
    max_depth: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.min_node_size is not None and self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")

    def resolve(self, p: int, task: str) -> tuple[int, int, int]:
        """Concrete (mtry, min_node_size, max_depth) for a given width/task."""
        if self.mtry is not None:
            mtry = min(self.mtry, p)
        elif task == CLASSIFICATION:
            mtry = max(1, int(np.sqrt(p)))
        else:
            mtry = max(1, p // 3)
        if self.min_node_size is not None:
            min_node = self.min_node_size
        else:
            min_node = 1 if task == CLASSIFICATION else 5
        max_depth = self.max_depth if self.max_depth is not None else 1 << 30
        return mtry, min_node, max_depth


@dataclass
class _Tree:
    feature: np.ndarray      # split column, -1 for leaves
    threshold: np.ndarray    # numeric split point (unused for subset splits)
    cat_mask: np.ndarray     # bitmask of levels routed left; 0 for numeric splits
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray        # leaf mean, or (n_nodes, K) class frequencies
    depth: int


@dataclass
class Forest:
    trees: list[_Tree]
    in_bag: np.ndarray                  # (n_trees, n_train) bootstrap membership
    task: str
    n_classes: Optional[int]
    cat_levels: np.ndarray              # (p,) 0 for numeric columns, else K
    params: ForestParams
    n_features: int
    importance_: np.ndarray = field(repr=False, default=None)

    @property
    def oob_index(self) -> np.ndarray:
        """Per-tree bootstrap-exclusion masks (True where a row is out of bag)."""
        return ~self.in_bag


def _node_candidate_matrix(X, idx, cands, cat_levels, y_node, task):
    """Candidate-value matrix for one node, with categorical columns
    replaced by their level rank under the ordered-subset trick."""
    n_node = idx.shape[0]
    V = np.empty((n_node, cands.shape[0]))
    cat_orders = {}
    for s, f in enumerate(cands):
        col = X[idx, f]
        K = cat_levels[f]
        if K == 0:
            V[:, s] = col
            continue
        lv = col.astype(np.int64)
        counts = np.bincount(lv, minlength=K + 1)[1:]
        if task == REGRESSION:
            stat = np.bincount(lv, weights=y_node, minlength=K + 1)[1:]
        else:
            stat = np.bincount(lv, weights=(y_node == 1).astype(np.float64), minlength=K + 1)[1:]
        with np.errstate(invalid="ignore"):
            stat = np.where(counts > 0, stat / np.maximum(counts, 1), np.inf)
        order = np.argsort(stat, kind="stable")
        rank = np.empty(K)
        rank[order] = np.arange(K)
        V[:, s] = rank[lv - 1]
        cat_orders[s] = order
    return V, cat_orders


def _best_split(V, y_node, task, n_classes, min_node):
    """Best (criterion gain, cut position, candidate slot) over all candidates.

    Returns (gain, slot, cut_value_low, cut_value_high) or None.  The gain is
    the decrease in SSE (regression) or in n*Gini (classification).
    """
    n_node = V.shape[0]
    sort_idx = np.argsort(V, axis=0, kind="stable")
    Vs = np.take_along_axis(V, sort_idx, axis=0)
    boundary_ok = Vs[:-1] < Vs[1:]
    n_l = np.arange(1, n_node, dtype=np.float64)[:, None]
    n_r = n_node - n_l
    size_ok = (n_l >= min_node) & (n_r >= min_node)
    valid = boundary_ok & size_ok
    if not valid.any():
        return None

    ys = y_node[sort_idx]
    if task == REGRESSION:
        P = np.cumsum(ys, axis=0)
        total = P[-1, 0]
        left_sum = P[:-1]
        crit = left_sum * left_sum / n_l + (total - left_sum) ** 2 / n_r
        base = total * total / n_node
    else:
        crit = np.zeros((n_node - 1, V.shape[1]))
        base = 0.0
        for k in range(1, n_classes + 1):
            ck = np.cumsum(ys == k, axis=0, dtype=np.float64)
            tot_k = ck[-1, 0]
            lk = ck[:-1]
            crit += lk * lk / n_l + (tot_k - lk) ** 2 / n_r
            base += tot_k * tot_k / n_node

    crit[~valid] = -np.inf
    flat = int(np.argmax(crit))
    i, slot = divmod(flat, V.shape[1])
    gain = crit[i, slot] - base
    if not np.isfinite(gain) or gain <= _GAIN_TOL * max(1.0, abs(base)):
        return None
    return gain, slot, Vs[i, slot], Vs[i + 1, slot]


def _grow_tree(X, y, cat_levels, task, n_classes, mtry, min_node, max_depth, rng, importance):
    n = X.shape[0]
    p = X.shape[1]
    boot = rng.integers(0, n, size=n)

    feature, threshold, cat_mask, left, right, values = [], [], [], [], [], []
    # (sample_indices, depth, node_id) work stack; children allocated on push
    stack = [(boot, 0, 0)]
    _alloc(feature, threshold, cat_mask, left, right, values, task, n_classes)
    max_seen_depth = 0

    while stack:
        idx, depth, node_id = stack.pop()
        max_seen_depth = max(max_seen_depth, depth)
        y_node = y[idx]
        n_node = idx.shape[0]
        _set_leaf_value(values, node_id, y_node, task, n_classes)

        if n_node < 2 * min_node or depth >= max_depth:
            continue
        if task == REGRESSION:
            if y_node.max() - y_node.min() == 0.0:
                continue
        elif np.all(y_node == y_node[0]):
            continue

        cands = rng.choice(p, size=min(mtry, p), replace=False)
        V, cat_orders = _node_candidate_matrix(X, idx, cands, cat_levels, y_node, task)
        found = _best_split(V, y_node, task, n_classes, min_node)
        if found is None:
            continue
        gain, slot, v_lo, v_hi = found
        f = int(cands[slot])
        importance[f] += gain

        if slot in cat_orders:
            order = cat_orders[slot]
            n_left_levels = int(v_lo) + 1
            mask = 0
            for lvl in order[:n_left_levels]:
                mask |= 1 << int(lvl)
            lv = X[idx, f].astype(np.int64)
            go_left = (mask >> (lv - 1)) & 1 == 1
            feature[node_id] = f
            cat_mask[node_id] = mask
        else:
            thr = 0.5 * (v_lo + v_hi)
            go_left = X[idx, f] <= thr
            feature[node_id] = f
            threshold[node_id] = thr

        left_id = _alloc(feature, threshold, cat_mask, left, right, values, task, n_classes)
        right_id = _alloc(feature, threshold, cat_mask, left, right, values, task, n_classes)
        left[node_id] = left_id
        right[node_id] = right_id
        stack.append((idx[go_left], depth + 1, left_id))
        stack.append((idx[~go_left], depth + 1, right_id))

    value_arr = np.asarray(values, dtype=np.float64)
    return _Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        cat_mask=np.asarray(cat_mask, dtype=np.int64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=value_arr,
        depth=max_seen_depth + 1,
    ), boot


def _alloc(feature, threshold, cat_mask, left, right, values, task, n_classes):
    feature.append(-1)
    threshold.append(0.0)
    cat_mask.append(0)
    left.append(-1)
    right.append(-1)
    values.append(0.0 if task == REGRESSION else np.zeros(n_classes))
    return len(feature) - 1


def _set_leaf_value(values, node_id, y_node, task, n_classes):
    if task == REGRESSION:
        values[node_id] = float(y_node.mean())
    else:
        counts = np.bincount(y_node.astype(np.int64), minlength=n_classes + 1)[1:]
        values[node_id] = counts / counts.sum()


def fit_forest(
    features: MixedDataset,
    target: np.ndarray,
    params: ForestParams,
    task: str = REGRESSION,
    n_classes: Optional[int] = None,
) -> Forest:
    """Fit a forest of ``params.n_trees`` bootstrap trees.

    ``target`` is a length-n response: reals for regression, integer levels
    ``1..K`` for classification (pass ``n_classes=K``).  Fits are
    deterministic given (data, params, seed).
    """
    if task not in (REGRESSION, CLASSIFICATION):
        raise ValueError(f"unknown task {task!r}")
    X = features.values
    y = np.asarray(target, dtype=np.float64)
    n, p = X.shape
    if y.shape != (n,):
        raise SchemaError(f"target shape {y.shape} does not match n={n}")
    if task == CLASSIFICATION:
        if n_classes is None:
            n_classes = int(y.max())
        if np.any((y < 1) | (y > n_classes) | (y != np.floor(y))):
            raise SchemaError("classification target must hold integer levels 1..K")
    mtry, min_node, max_depth = params.resolve(p, task)
    if n < 2 * min_node:
        raise ValueError(f"need n >= 2*min_node_size, got n={n}, min_node_size={min_node}")

    cat_levels = np.array(
        [c.levels if c.is_categorical else 0 for c in features.schema], dtype=np.int64
    )
    importance = np.zeros(p)
    trees = []
    in_bag = np.zeros((params.n_trees, n), dtype=bool)
    for t in range(params.n_trees):
        rng = keyed_rng(params.seed, "tree", t)
        tree, boot = _grow_tree(
            X, y, cat_levels, task, n_classes, mtry, min_node, max_depth, rng, importance
        )
        trees.append(tree)
        in_bag[t, boot] = True

    importance /= params.n_trees * n
    return Forest(
        trees=trees,
        in_bag=in_bag,
        task=task,
        n_classes=n_classes,
        cat_levels=cat_levels,
        params=params,
        n_features=p,
        importance_=importance,
    )


def _tree_leaf_nodes(tree: _Tree, X: np.ndarray) -> np.ndarray:
    """Vectorized descent: leaf node id for every row of X."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    for _ in range(tree.depth):
        f = tree.feature[node]
        interior = f >= 0
        if not interior.any():
            break
        x = X[rows, np.where(interior, f, 0)]
        mask = tree.cat_mask[node]
        is_cat = mask != 0
        go_left = x <= tree.threshold[node]
        if is_cat.any():
            lv = np.clip(x[is_cat].astype(np.int64), 1, 63)
            go_left[is_cat] = (mask[is_cat] >> (lv - 1)) & 1 == 1
        nxt = np.where(go_left, tree.left[node], tree.right[node])
        node = np.where(interior, nxt, node)
    return node


def _predict_matrix(forest: Forest, X: np.ndarray) -> np.ndarray:
    """Mean over trees of leaf predictions; (n,) or (n, K)."""
    if forest.task == REGRESSION:
        acc = np.zeros(X.shape[0])
    else:
        acc = np.zeros((X.shape[0], forest.n_classes))
    for tree in forest.trees:
        acc += tree.value[_tree_leaf_nodes(tree, X)]
    return acc / len(forest.trees)


def _check_rows(forest: Forest, row) -> np.ndarray:
    X = np.asarray(row, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise SchemaError(
            f"row has {X.shape[-1]} features, forest was trained on {forest.n_features}"
        )
    for j in np.flatnonzero(forest.cat_levels):
        x = X[:, j]
        K = forest.cat_levels[j]
        if np.any((x < 1) | (x > K) | (x != np.floor(x))):
            raise SchemaError(f"categorical column {j} holds a level outside 1..{K}")
    return X, single


def predict(forest: Forest, row) -> np.ndarray | float:
    """Forest prediction for one row or a matrix of rows (regression)."""
    if forest.task != REGRESSION:
        raise ValueError("predict() is for regression forests; use predict_proba()")
    X, single = _check_rows(forest, row)
    out = _predict_matrix(forest, X)
    return float(out[0]) if single else out


def predict_proba(forest: Forest, row) -> np.ndarray:
    """Class-probability vector(s); rows sum to one."""
    if forest.task != CLASSIFICATION:
        raise ValueError("predict_proba() requires a classification forest")
    X, single = _check_rows(forest, row)
    out = _predict_matrix(forest, X)
    return out[0] if single else out


def oob_predict(forest: Forest, training_features: MixedDataset):
    """Out-of-bag predictions for the training rows.

    Row i averages only trees whose bootstrap excluded row i.  Rows that
    are in every bootstrap fall back to the full-forest prediction and are
    flagged True in the returned mask.

    Returns (predictions, fallback_mask); predictions are (n,) for
    regression or (n, K) class probabilities for classification.
    """
    X = training_features.values
    n = X.shape[0]
    if forest.in_bag.shape[1] != n:
        raise SchemaError("training_features do not match the fitted forest")
    if forest.task == REGRESSION:
        acc = np.zeros(n)
    else:
        acc = np.zeros((n, forest.n_classes))
    cnt = np.zeros(n)
    for t, tree in enumerate(forest.trees):
        oob = ~forest.in_bag[t]
        if not oob.any():
            continue
        acc[oob] += tree.value[_tree_leaf_nodes(tree, X[oob])]
        cnt[oob] += 1
    fallback = cnt == 0
    covered = ~fallback
    if forest.task == REGRESSION:
        acc[covered] /= cnt[covered]
    else:
        acc[covered] /= cnt[covered, None]
    if fallback.any():
        acc[fallback] = _predict_matrix(forest, X[fallback])
    return acc, fallback
