"""Lasso regularization path by coordinate descent, and the LCD /
Lasso-Max knockoff statistics built on it.

The solver standardizes features and centers the response internally and
works on the objective (1/2n)||y - Xb||^2 + lambda*||b||_1, so the path
starts at lambda_max = max_j |x_j^T y| / n.  Updates use the covariance
(Gram) recursion, and every grid point is polished until both the duality
gap and the coordinate-wise KKT residuals are below tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .._rng import keyed_rng
from ..data import MixedDataset
from ..errors import NumericalError
from .base import WStatistics, aggregate_group, augmented_encoding

GAP_TOL = 1e-7
KKT_TOL = 1e-8
_MAX_SWEEPS = 100_000


@dataclass
class LassoFit:
    """Path solution over a decreasing lambda grid.

    Coefficients are on the standardized-feature scale; ``coef_original``
    maps back to raw units.  ``intercept_path`` completes the raw-unit
    model: yhat = intercept + X @ coef_original.
    """

    lambda_grid: np.ndarray
    coef_path: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    chosen_lambda: Optional[float] = None
    cv_errors: Optional[np.ndarray] = None

    @property
    def intercept_path(self) -> np.ndarray:
        raw = self.coef_path / self.x_std
        return self.y_mean - raw @ self.x_mean

    def coef(self, lam: Optional[float] = None) -> np.ndarray:
        """Standardized-scale coefficients at a grid lambda (default: the
        chosen one, else the smallest grid point)."""
        if lam is None:
            lam = self.chosen_lambda if self.chosen_lambda is not None else self.lambda_grid[-1]
        i = int(np.argmin(np.abs(self.lambda_grid - lam)))
        return self.coef_path[i]

    def coef_original(self, lam: Optional[float] = None) -> np.ndarray:
        return self.coef(lam) / self.x_std


def _standardize(X):
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (X - mean) / std, mean, std


def _sweep_python(G, gd, lam, beta, q, idx):
    """One coordinate-descent pass over idx; returns the largest move."""
    moved = 0.0
    for j in idx:
        u = q[j] + gd[j] * beta[j]
        new = np.sign(u) * max(abs(u) - lam, 0.0) / gd[j]
        delta = new - beta[j]
        if delta != 0.0:
            beta[j] = new
            q -= G[:, j] * delta
            moved = max(moved, abs(delta))
    return moved


try:  # the compiled kernel runs the same float ops in the same order
    from numba import njit

    @njit(cache=True)
    def _sweep(G, gd, lam, beta, q, idx):  # pragma: no cover - thin jit shim
        moved = 0.0
        for k in range(idx.shape[0]):
            j = idx[k]
            u = q[j] + gd[j] * beta[j]
            if u > lam:
                new = (u - lam) / gd[j]
            elif u < -lam:
                new = (u + lam) / gd[j]
            else:
                new = 0.0
            delta = new - beta[j]
            if delta != 0.0:
                beta[j] = new
                for i in range(q.shape[0]):
                    q[i] -= G[i, j] * delta
                if abs(delta) > moved:
                    moved = abs(delta)
        return moved

except ImportError:  # pragma: no cover
    _sweep = _sweep_python


def _kkt_violations(q, beta, lam, mask):
    viol = np.where(
        beta != 0.0, np.abs(q - lam * np.sign(beta)), np.maximum(np.abs(q) - lam, 0.0)
    )
    viol[~mask] = 0.0
    return viol


def _cd_solve(G, c, lam, beta, q, active_ok, y2n, lam_prev=None):
    """Polish beta (and its gradient cache q = c - G beta) at one lambda.

    Coordinates are restricted to the sequential strong-rule set (seeded
    from the previous lambda) plus the current support; the full KKT
    check afterwards pulls in any violators, so the returned solution is
    exact regardless of the screen.
    """
    gd = np.diag(G)
    if lam_prev is None:
        lam_prev = float(np.abs(q).max(initial=lam))
    work = active_ok & ((np.abs(q) >= 2.0 * lam - lam_prev) | (beta != 0.0))
    for _ in range(50):
        idx = np.flatnonzero(work)
        for _ in range(_MAX_SWEEPS):
            _sweep(G, gd, lam, beta, q, idx)
            if _kkt_violations(q, beta, lam, work).max(initial=0.0) <= KKT_TOL:
                break
        else:
            raise NumericalError(f"coordinate descent did not converge at lambda={lam:.3e}")
        viol = _kkt_violations(q, beta, lam, active_ok)
        if viol.max(initial=0.0) <= KKT_TOL:
            # lambda=0 is plain least squares: KKT (zero gradient) is the
            # whole optimality condition and the lasso dual degenerates
            if lam == 0.0 or _duality_gap(q, c, beta, lam, y2n) <= GAP_TOL:
                return
            work = active_ok.copy()
        else:
            new = (viol > KKT_TOL) & ~work
            work = work | new if new.any() else active_ok.copy()
    raise NumericalError(f"screening loop did not settle at lambda={lam:.3e}")


def _duality_gap(q, c, beta, lam, y2n):
    r2n = y2n - c @ beta - q @ beta  # ||r||^2 / n
    l1 = np.abs(beta).sum()
    qmax = np.abs(q).max() if q.size else 0.0
    s = 1.0 if qmax <= lam else lam / qmax
    return 0.5 * r2n + lam * l1 - s * (r2n + q @ beta) + 0.5 * s * s * r2n


def default_lambda_grid(lambda_max: float, n_lambdas: int = 100, min_ratio: float = 1e-3):
    lambda_max = max(lambda_max, 1e-12)
    return np.geomspace(lambda_max, lambda_max * min_ratio, n_lambdas)


def lasso_path(
    features,
    y,
    lambda_grid=None,
    n_lambdas: int = 100,
    lambda_min_ratio: float = 1e-3,
) -> LassoFit:
    """Warm-started coordinate-descent path over a decreasing lambda grid."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("lasso inputs must be finite")
    n = X.shape[0]
    Z, x_mean, x_std = _standardize(X)
    y_mean = float(y.mean())
    yc = y - y_mean
    y_scale = float(yc.std()) or 1.0
    yn = yc / y_scale

    G = Z.T @ Z / n
    c = Z.T @ yn / n
    active_ok = np.diag(G) > 0
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(
            float(np.abs(c).max(initial=0.0)) * y_scale, n_lambdas, lambda_min_ratio
        )
    lambda_grid = np.asarray(sorted(lambda_grid, reverse=True), dtype=np.float64)
    if np.any(lambda_grid < 0):
        raise ValueError("lambda grid must be non-negative")

    y2n = float(np.mean(yn**2))
    beta = np.zeros(Z.shape[1])
    q = c.copy()
    coefs = np.empty((lambda_grid.size, Z.shape[1]))
    lam_prev = None
    for i, lam in enumerate(lambda_grid):
        _cd_solve(G, c, lam / y_scale, beta, q, active_ok, y2n, lam_prev=lam_prev)
        coefs[i] = beta * y_scale
        lam_prev = lam / y_scale
    return LassoFit(
        lambda_grid=lambda_grid,
        coef_path=coefs,
        x_mean=x_mean,
        x_std=x_std,
        y_mean=y_mean,
    )


def lasso_cv(
    features,
    y,
    n_folds: int = 5,
    seed: int = 0,
    lambda_grid=None,
    n_lambdas: int = 100,
    lambda_min_ratio: float = 1e-3,
) -> LassoFit:
    """Pick lambda by k-fold cross-validated held-out squared error."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    if n < n_folds:
        raise ValueError(f"need n >= n_folds, got n={n}, n_folds={n_folds}")

    if lambda_grid is None:
        Z, _, _ = _standardize(X)
        yc = y - y.mean()
        lam_max = float(np.abs(Z.T @ yc).max(initial=0.0)) / n
        lambda_grid = default_lambda_grid(lam_max, n_lambdas, lambda_min_ratio)
    lambda_grid = np.asarray(sorted(lambda_grid, reverse=True), dtype=np.float64)

    perm = keyed_rng(seed, "cv_folds").permutation(n)
    folds = np.array_split(perm, n_folds)
    errors = np.zeros((lambda_grid.size, n_folds))
    for f, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(perm, test_idx, assume_unique=True)
        fit = lasso_path(X[train_idx], y[train_idx], lambda_grid=lambda_grid)
        pred = fit.y_mean + (X[test_idx] - fit.x_mean) / fit.x_std @ fit.coef_path.T
        errors[:, f] = np.mean((pred - y[test_idx][:, None]) ** 2, axis=0)
    mean_err = errors.mean(axis=1)
    chosen = float(lambda_grid[int(np.argmin(mean_err))])
    fit = lasso_path(X, y, lambda_grid=lambda_grid)
    fit.chosen_lambda = chosen
    fit.cv_errors = mean_err
    return fit


def _entry_lambda(fit: LassoFit, X, y, col: int, rel_tol: float = 1e-4) -> float:
    """sup{lambda : beta_col(lambda) != 0}, refined by bisection between the
    adjacent grid points around the first activation; 0 if never active."""
    path_active = np.abs(fit.coef_path[:, col]) > 1e-12
    if not path_active.any():
        return 0.0
    i = int(np.argmax(path_active))
    lo = float(fit.lambda_grid[i])  # active here
    if i == 0:
        # active at the top of the grid; bracket with the theoretical maximum
        hi = max(float(np.abs((_standardize(X)[0].T @ (y - y.mean())) / len(y)).max()), lo * (1 + 1e-3))
        if hi <= lo * (1 + 1e-12):
            return lo
    else:
        hi = float(fit.lambda_grid[i - 1])  # inactive here
    while (hi - lo) > rel_tol * max(hi, 1e-300):
        mid = 0.5 * (hi + lo)
        coef = lasso_path(X, y, lambda_grid=[mid]).coef_path[0, col]
        if abs(coef) > 1e-12:
            lo = mid
        else:
            hi = mid
    return lo


def lcd_statistics(
    X: MixedDataset,
    Xt: MixedDataset,
    y,
    aggregate: str = "max",
    n_folds: int = 5,
    seed: int = 0,
    lam: Optional[float] = None,
    n_lambdas: int = 60,
    lambda_min_ratio: float = 1e-2,
) -> WStatistics:
    """Lasso coefficient-difference statistics on the augmented design.

    W_j = |T_j| - |T~_j| with T_j the aggregated coefficient magnitude of
    feature j's one-hot group at the (cross-validated or given) lambda.
    """
    design, enc, enc_t = augmented_encoding(X, Xt)
    y = np.asarray(y, dtype=np.float64)
    if lam is None:
        fit = lasso_cv(design, y, n_folds=n_folds, seed=seed, n_lambdas=n_lambdas,
                       lambda_min_ratio=lambda_min_ratio)
        lam = fit.chosen_lambda
        coef = fit.coef(lam)
    else:
        coef = lasso_path(design, y, lambda_grid=[lam]).coef_path[0]
    w = np.empty(X.p)
    for j in range(X.p):
        t = aggregate_group(coef, enc.groups[j], aggregate)
        t_ko = aggregate_group(coef, enc_t.groups[j], aggregate)
        w[j] = t - t_ko
    return WStatistics(
        w=w,
        method="lcd",
        names=X.names,
        metadata={"lambda": lam, "aggregate": aggregate, "seed": seed},
    )


def lasso_max_statistics(
    X: MixedDataset,
    Xt: MixedDataset,
    y,
    aggregate: str = "max",
    n_lambdas: int = 100,
    lambda_min_ratio: float = 1e-3,
) -> WStatistics:
    """Path-entry statistics: W_j = T_j - T~_j where T is the largest
    penalty at which the feature's group is active (0 if never active)."""
    design, enc, enc_t = augmented_encoding(X, Xt)
    y = np.asarray(y, dtype=np.float64)
    fit = lasso_path(design, y, n_lambdas=n_lambdas, lambda_min_ratio=lambda_min_ratio)
    entry = np.zeros(design.shape[1])
    ever = np.abs(fit.coef_path).max(axis=0) > 1e-12
    for col in np.flatnonzero(ever):
        entry[col] = _entry_lambda(fit, design, y, col)
    w = np.empty(X.p)
    for j in range(X.p):
        t = aggregate_group(entry, enc.groups[j], aggregate)
        t_ko = aggregate_group(entry, enc_t.groups[j], aggregate)
        w[j] = t - t_ko
    return WStatistics(
        w=w,
        method="lasso_max",
        names=X.names,
        metadata={"aggregate": aggregate, "n_lambdas": n_lambdas},
    )
