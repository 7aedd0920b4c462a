"""Knockoff generators.

Three families:

* ``second_order_knockoffs`` -- Gaussian knockoffs matching first and
  second moments, with the equi-correlated diagonal.
* ``conditional_residual_knockoffs`` -- fit a forest conditional mean for
  every column, knock off the pooled out-of-bag residuals, and add the
  conditional means back; categorical columns are re-sampled from their
  estimated conditional class probabilities.
* ``scip_forest_knockoffs`` -- sequential column-by-column generation,
  each column's model conditioning on all other originals plus the
  knockoffs generated so far.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg

from ._rng import keyed_rng
from .data import (
    ColumnSchema,
    KnockoffMatrix,
    MixedDataset,
    Provenance,
    ResidualMatrix,
    numeric_schema,
    require_valid,
)
from .errors import NumericalError
from .forest import (
    CLASSIFICATION,
    REGRESSION,
    Forest,
    ForestParams,
    fit_forest,
    oob_predict,
    _predict_matrix,
)

SECOND_ORDER_RESIDUALS = "second_order"
PERMUTE_RESIDUALS = "permute"


@dataclass(frozen=True)
class ResidualKnockoffGenerator:
    """How residual columns are knocked off inside the forest generators."""

    kind: str = SECOND_ORDER_RESIDUALS
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (SECOND_ORDER_RESIDUALS, PERMUTE_RESIDUALS):
            raise ValueError(f"unknown residual generator kind {self.kind!r}")


@dataclass
class SecondOrderModel:
    """Fitted Gaussian knockoff sampler: X~ | X is Gaussian with mean
    X - (X - mu) @ cond_coef and covariance cond_sqrt @ cond_sqrt.T."""

    mu: np.ndarray
    Sigma: np.ndarray
    s: np.ndarray
    cond_coef: np.ndarray
    cond_sqrt: np.ndarray


def solve_equicorrelated_s(Sigma) -> np.ndarray:
    """Equi-correlated decorrelation diagonal for a covariance matrix.

    On the correlation scale every coordinate gets min(1, 2*lambda_min);
    the result is mapped back through the variances, so 2*Sigma - diag(s)
    stays positive semidefinite.
    """
    Sigma = np.asarray(Sigma, dtype=np.float64)
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1]:
        raise ValueError(f"covariance must be square, got {Sigma.shape}")
    scale = max(1.0, float(np.abs(Sigma).max()))
    if np.abs(Sigma - Sigma.T).max() > 1e-8 * scale:
        raise ValueError("covariance must be symmetric")
    d = np.diag(Sigma)
    if np.any(d <= 0):
        raise NumericalError("covariance has non-positive diagonal entries")
    root = np.sqrt(d)
    corr = Sigma / np.outer(root, root)
    lam_min = float(scipy.linalg.eigvalsh(corr)[0])
    if lam_min < -1e-8:
        raise NumericalError(f"matrix is not PSD (min correlation eigenvalue {lam_min:.3e})")
    return min(1.0, 2.0 * max(lam_min, 0.0)) * d


def _shrunk_covariance(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean / covariance; off-diagonals get Ledoit-Wolf-style
    shrinkage toward the diagonal when n < 2p."""
    n, p = X.shape
    mu = X.mean(axis=0)
    Xc = X - mu
    S = Xc.T @ Xc / (n - 1)
    if n >= 2 * p or p == 1:
        return mu, S
    W = np.einsum("ni,nj->nij", Xc, Xc)
    var_s = W.var(axis=0, ddof=0) * n / (n - 1) ** 3 * n
    off = ~np.eye(p, dtype=bool)
    denom = float((S[off] ** 2).sum())
    alpha = 1.0 if denom <= 0 else min(1.0, max(0.0, float(var_s[off].sum()) / denom))
    shrunk = (1 - alpha) * S
    np.fill_diagonal(shrunk, np.diag(S))
    return mu, shrunk


def fit_second_order(X: np.ndarray, s: Optional[np.ndarray] = None) -> SecondOrderModel:
    """Estimate the Gaussian knockoff sampler from a numeric matrix."""
    X = np.asarray(X, dtype=np.float64)
    mu, Sigma = _shrunk_covariance(X)
    if s is None:
        s = solve_equicorrelated_s(Sigma)
    s = np.asarray(s, dtype=np.float64)
    D = np.diag(s)
    try:
        cho = scipy.linalg.cho_factor(Sigma)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"singular covariance after shrinkage: {exc}") from exc
    cond_coef = scipy.linalg.cho_solve(cho, D)
    V = 2.0 * D - D @ cond_coef
    V = 0.5 * (V + V.T)
    evals, evecs = scipy.linalg.eigh(V)
    evals = np.clip(evals, 0.0, None)
    cond_sqrt = evecs * np.sqrt(evals)
    return SecondOrderModel(mu=mu, Sigma=Sigma, s=s, cond_coef=cond_coef, cond_sqrt=cond_sqrt)


def sample_second_order(model: SecondOrderModel, X: np.ndarray, rng: np.random.Generator):
    X = np.asarray(X, dtype=np.float64)
    Z = rng.standard_normal(X.shape)
    return X - (X - model.mu) @ model.cond_coef + Z @ model.cond_sqrt.T


def second_order_knockoffs(X, seed: int = 0, s: Optional[np.ndarray] = None) -> KnockoffMatrix:
    """Gaussian second-order knockoffs of an all-numeric dataset."""
    if isinstance(X, MixedDataset):
        if any(c.is_categorical for c in X.schema):
            raise ValueError("second_order_knockoffs requires all-numeric columns")
        require_valid(X)
        schema = X.schema
        values = X.values
    else:
        values = np.asarray(X, dtype=np.float64)
        schema = numeric_schema(f"x{j + 1}" for j in range(values.shape[1]))
    model = fit_second_order(values, s=s)
    Xt = sample_second_order(model, values, keyed_rng(seed, "second_order"))
    return KnockoffMatrix(Xt, schema, Provenance("second_order", seed))


def permute_residuals(gamma_col, seed: int = 0) -> np.ndarray:
    """Uniformly random permutation of one residual column."""
    gamma_col = np.asarray(gamma_col, dtype=np.float64)
    return keyed_rng(seed, "permute").permutation(gamma_col)


@dataclass
class ResidualSecondOrder:
    """Second-order residual knockoffs consistent with the reassembled data.

    Knocking off pooled residuals with the plain Gaussian sampler would
    shrink each row toward the residual mean by Sigma_r^{-1} D_r, which
    wrecks the cross-covariance between the conditional means and the
    residuals once the columns are reassembled (Cov(Xhat, Gamma) is not
    zero whenever the residuals are correlated).  Restricting the
    decorrelation diagonal to c * diag(Sigma_r) makes the whole update a
    scalar shrink, Gamma~ = (1-c) Gamma + noise, and then
    Xhat + Gamma~ has exactly the Gaussian knockoff joint law with
    D = c * diag(Sigma_r).  For independent columns (residuals = data)
    this reduces to the classic equi-correlated construction.
    """

    mu: np.ndarray
    c: float
    noise_sqrt: np.ndarray

    def sample(self, gamma: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        Z = rng.standard_normal(gamma.shape)
        return self.mu + (1.0 - self.c) * (gamma - self.mu) + Z @ self.noise_sqrt.T


def fit_residual_second_order(gamma: np.ndarray, x_var) -> ResidualSecondOrder:
    """Calibrate the scalar shrink c from residual moments.

    c is pushed as high as the PSD constraint 2c*D_g - c^2*Sigma_r >= 0
    allows (c <= 2 / lambda_max(Corr(Gamma))), capped so no coordinate's
    decorrelation exceeds its data variance (c <= Var(X_j)/Var(Gamma_j)),
    mirroring the equi-correlated cap at s = 1.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    x_var = np.atleast_1d(np.asarray(x_var, dtype=np.float64))
    mu, Sigma_r = _shrunk_covariance(gamma)
    d_g = np.diag(Sigma_r).copy()
    if np.any(d_g <= 0):
        raise NumericalError("a residual column has zero variance")
    root = np.sqrt(d_g)
    corr = Sigma_r / np.outer(root, root)
    lam_max = float(scipy.linalg.eigvalsh(corr)[-1])
    ratio = d_g / np.maximum(x_var, 1e-300)
    c = min(2.0 / lam_max, 1.0 / float(ratio.max()))
    V = 2.0 * c * np.diag(d_g) - c * c * Sigma_r
    evals, evecs = scipy.linalg.eigh(0.5 * (V + V.T))
    noise_sqrt = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return ResidualSecondOrder(mu=mu, c=c, noise_sqrt=noise_sqrt)


def _drop_column(X: MixedDataset, j: int) -> MixedDataset:
    keep = [k for k in range(X.p) if k != j]
    return MixedDataset(X.values[:, keep], [X.schema[k] for k in keep])


def _sample_levels(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one level per row from per-row probability vectors."""
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(probs.shape[0])
    return 1.0 + (u[:, None] > cum).sum(axis=1)


def _fit_column_model(
    features: Optional[MixedDataset],
    target: np.ndarray,
    col: ColumnSchema,
    params: ForestParams,
    seed_key,
    use_oob: bool,
):
    """Conditional mean (numeric) or class probabilities (categorical) for
    one column; with no conditioning features this is the marginal."""
    if col.is_categorical:
        K = col.levels
        if features is None:
            freq = np.bincount(target.astype(np.int64), minlength=K + 1)[1:] / target.shape[0]
            return np.tile(freq, (target.shape[0], 1))
        forest = fit_forest(
            features,
            target,
            ForestParams(
                n_trees=params.n_trees,
                mtry=params.mtry,
                min_node_size=params.min_node_size,
                max_depth=params.max_depth,
                seed=seed_key,
            ),
            CLASSIFICATION,
            n_classes=K,
        )
        if use_oob:
            probs, _ = oob_predict(forest, features)
        else:
            probs = _predict_matrix(forest, features.values)
        return probs
    if features is None:
        return np.full(target.shape[0], target.mean())
    forest = fit_forest(
        features,
        target,
        ForestParams(
            n_trees=params.n_trees,
            mtry=params.mtry,
            min_node_size=params.min_node_size,
            max_depth=params.max_depth,
            seed=seed_key,
        ),
        REGRESSION,
    )
    if use_oob:
        pred, _ = oob_predict(forest, features)
    else:
        pred = _predict_matrix(forest, features.values)
    return pred


def conditional_residual_knockoffs(
    X: MixedDataset,
    params: ForestParams,
    gen: ResidualKnockoffGenerator = ResidualKnockoffGenerator(),
    use_oob: bool = True,
    n_jobs: int = 1,
) -> KnockoffMatrix:
    """Conditional residual knockoffs with forest conditional means.

    Every numeric column j gets a forest estimate of E[X_j | X_-j]; the
    pooled residual matrix is knocked off with the configured residual
    generator and added back to the conditional means.  Categorical
    columns are sampled from their estimated conditional class
    probabilities.  Out-of-bag predictions are the default because
    in-sample forest fits shrink residuals toward zero.  Per-column fits
    are independent; ``n_jobs`` > 1 runs them in parallel without
    changing the output.
    """
    require_valid(X)
    n, p = X.n, X.p
    cat = X.categorical_mask
    xhat = np.zeros((n, p))
    gamma = np.zeros((n, p))
    cat_probs: dict[int, np.ndarray] = {}

    def _one_column(j):
        features = _drop_column(X, j) if p > 1 else None
        return _fit_column_model(
            features, X.values[:, j], X.schema[j], params, _col_seed(params.seed, j), use_oob
        )

    if n_jobs > 1:
        from joblib import Parallel, delayed

        fitted_cols = Parallel(n_jobs=n_jobs)(delayed(_one_column)(j) for j in range(p))
    else:
        fitted_cols = [_one_column(j) for j in range(p)]

    for j, fitted in enumerate(fitted_cols):
        if X.schema[j].is_categorical:
            cat_probs[j] = fitted
        else:
            xhat[:, j] = fitted
            gamma[:, j] = X.values[:, j] - fitted

    residuals = ResidualMatrix(gamma, cat)
    gamma_tilde = _knockoff_residual_matrix(residuals, gen, X.values)

    out = np.empty((n, p))
    num_idx = np.flatnonzero(~cat)
    out[:, num_idx] = xhat[:, num_idx] + gamma_tilde[:, num_idx]
    for j in np.flatnonzero(cat):
        rng = keyed_rng(gen.seed, "cat_sample", j)
        out[:, j] = _sample_levels(cat_probs[j], rng)
    prov = Provenance(f"conditional_residual[{gen.kind}]", params.seed)
    return KnockoffMatrix(out, X.schema, prov)


def _col_seed(seed: int, j: int) -> int:
    # keep per-column forest streams disjoint while staying a plain int seed
    return (int(seed) * 1_000_003 + j) & ((1 << 63) - 1)


def _knockoff_residual_matrix(
    residuals: ResidualMatrix, gen: ResidualKnockoffGenerator, x_values: np.ndarray
):
    """Apply the residual generator to the numeric block; categorical
    columns stay zero (they are re-sampled, not shifted)."""
    gamma = residuals.values
    out = np.zeros_like(gamma)
    num_idx = np.flatnonzero(~residuals.categorical_mask)
    if num_idx.size == 0:
        return out
    block = gamma[:, num_idx]
    if gen.kind == PERMUTE_RESIDUALS:
        for pos, j in enumerate(num_idx):
            out[:, j] = permute_residuals(block[:, pos], _col_seed(gen.seed, int(j)))
        return out
    model = fit_residual_second_order(block, x_values[:, num_idx].var(axis=0, ddof=1))
    out[:, num_idx] = model.sample(block, keyed_rng(gen.seed, "residual"))
    return out


def scip_forest_knockoffs(
    X: MixedDataset,
    params: ForestParams,
    gen: ResidualKnockoffGenerator = ResidualKnockoffGenerator(kind=PERMUTE_RESIDUALS),
    order: Optional[Sequence[int]] = None,
    use_oob: bool = True,
) -> KnockoffMatrix:
    """Sequential conditionally-independent forest knockoffs.

    Columns are generated one at a time; column j's model is fit on all
    other original columns plus the knockoff columns generated before it.
    Residual knockoffs default to per-column permutation.
    """
    require_valid(X)
    n, p = X.n, X.p
    if order is None:
        order = range(p)
    order = [int(j) for j in order]
    if sorted(order) != list(range(p)):
        raise ValueError("order must be a permutation of all column indices")

    out = np.zeros((n, p))
    done: list[int] = []
    for j in order:
        col = X.schema[j]
        feat_cols = [k for k in range(p) if k != j]
        values = [X.values[:, feat_cols]]
        schema = [X.schema[k] for k in feat_cols]
        if done:
            values.append(out[:, done])
            schema += [
                ColumnSchema(f"{X.schema[k].name}~ko", X.schema[k].kind, X.schema[k].levels)
                for k in done
            ]
        if schema:
            features = MixedDataset(np.column_stack(values), schema)
        else:
            features = None
        target = X.values[:, j]
        fitted = _fit_column_model(features, target, col, params, _col_seed(params.seed, j), use_oob)
        if col.is_categorical:
            out[:, j] = _sample_levels(fitted, keyed_rng(gen.seed, "cat_sample", j))
        else:
            gamma = target - fitted
            if gen.kind == PERMUTE_RESIDUALS:
                gamma_t = permute_residuals(gamma, _col_seed(gen.seed, j))
            else:
                model = fit_residual_second_order(gamma[:, None], target.var(ddof=1))
                gamma_t = model.sample(gamma[:, None], keyed_rng(gen.seed, "residual", j))[:, 0]
            out[:, j] = fitted + gamma_t
        done.append(j)
    prov = Provenance(f"scip_forest[{gen.kind}]", params.seed)
    return KnockoffMatrix(out, X.schema, prov)


@dataclass(frozen=True)
class ExchangeabilityReport:
    max_mean_diff: float
    max_cov_diff: float


def exchangeability_diagnostic(
    X: MixedDataset, Xt: KnockoffMatrix, S: Iterable[int], n_moments: int = 2
) -> ExchangeabilityReport:
    """Moment discrepancy between [X, X~] and its swap(S) version.

    Reports the largest absolute difference between the empirical mean
    vectors and (if n_moments >= 2) covariance matrices of the joint
    2p-column matrices.
    """
    S = sorted(set(int(j) for j in S))
    M = np.hstack([X.values, Xt.values])
    Ms = M.copy()
    p = X.p
    for j in S:
        Ms[:, [j, p + j]] = Ms[:, [p + j, j]]
    mean_diff = float(np.abs(M.mean(axis=0) - Ms.mean(axis=0)).max())
    cov_diff = float("nan")
    if n_moments >= 2:
        cov_diff = float(np.abs(np.cov(M.T) - np.cov(Ms.T)).max())
    return ExchangeabilityReport(max_mean_diff=mean_diff, max_cov_diff=cov_diff)
