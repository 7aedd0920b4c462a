"""Real-data evaluation helpers: the log-linear age transform and k-fold
cross-validated OLS error for a selected feature set."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from ._rng import keyed_rng
from .data import MixedDataset
from .errors import NumericalError
from .importance.base import one_hot

_AGE_KNOT = 1.2
_AGE_OFFSET = 0.06
_AGE_SLOPE = 1.26


def age_transform(age):
    """Piecewise log-linear age transform, continuous at 1.2 years:
    log(age + 0.06) below the knot, (age - 1.2)/1.26 + log(1.26) above."""
    arr = np.asarray(age, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("age must be non-negative")
    out = np.where(
        arr < _AGE_KNOT,
        np.log(arr + _AGE_OFFSET),
        (arr - _AGE_KNOT) / _AGE_SLOPE + math.log(_AGE_SLOPE),
    )
    return float(out) if np.isscalar(age) else out


@dataclass(frozen=True)
class CvReport:
    fold_mses: tuple[float, ...]
    mean_mse: float
    selected: tuple[int, ...]
    k: int


def _ols_predict(X_tr, y_tr, X_te):
    """Least-squares fit with intercept; ridge 1e-8 fallback on rank
    deficiency."""
    A_tr = np.column_stack([np.ones(X_tr.shape[0]), X_tr])
    A_te = np.column_stack([np.ones(X_te.shape[0]), X_te])
    coef, _, rank, _ = np.linalg.lstsq(A_tr, y_tr, rcond=None)
    if rank < A_tr.shape[1]:
        G = A_tr.T @ A_tr + 1e-8 * np.eye(A_tr.shape[1])
        try:
            coef = np.linalg.solve(G, A_tr.T @ y_tr)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"rank-deficient fold beyond ridge fallback: {exc}") from exc
    return A_te @ coef


def cv_ols_mse(
    X_selected: Union[MixedDataset, np.ndarray],
    y,
    k: int = 10,
    seed: int = 0,
    selected: Optional[Sequence[int]] = None,
) -> CvReport:
    """k-fold cross-validated OLS mean squared error.

    ``X_selected`` holds only the selected features (categorical columns
    are one-hot encoded with the first level dropped); pass ``selected``
    to restrict a wider dataset to a subset of its columns.  An empty
    design scores the intercept-only model.  The fold partition is a
    seeded permutation cut into k nearly-equal pieces, each row held out
    exactly once.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"need n >= k, got n={n}, k={k}")

    if isinstance(X_selected, MixedDataset):
        keep = sorted(int(j) for j in selected) if selected is not None else list(range(X_selected.p))
        if keep:
            subset = MixedDataset(X_selected.values[:, keep], [X_selected.schema[j] for j in keep])
            design = one_hot(subset).matrix
        else:
            design = np.empty((n, 0))
    else:
        design = np.asarray(X_selected, dtype=np.float64)
        if design.ndim == 1:
            design = design[:, None]
        if design.size == 0:
            design = design.reshape(n, 0)
        keep = sorted(int(j) for j in selected) if selected is not None else list(range(design.shape[1]))
        design = design[:, keep]
    sel = tuple(keep)
    if design.shape[0] != n:
        raise ValueError("X and y row counts differ")
    if design.shape[1] >= n * (k - 1) // k:
        raise ValueError("too many selected columns for OLS on every training fold")

    perm = keyed_rng(seed, "cv_ols").permutation(n)
    folds = np.array_split(perm, k)
    mses = []
    for test_idx in folds:
        train_mask = np.ones(n, dtype=bool)
        train_mask[test_idx] = False
        pred = _ols_predict(design[train_mask], y[train_mask], design[test_idx])
        mses.append(float(np.mean((pred - y[test_idx]) ** 2)))
    return CvReport(
        fold_mses=tuple(mses),
        mean_mse=float(np.mean(mses)),
        selected=sel,
        k=k,
    )
