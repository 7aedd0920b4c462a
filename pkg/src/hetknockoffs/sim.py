"""Simulation designs: mixture-Gaussian mixed-type covariates, linear and
nonlinear outcomes over a fixed active set, and the replicated
power/FDR experiment loop.

The canonical layout is 96 numeric, 16 two-level and 16 three-level
columns (p=128) with active columns {2,7,31,86,87,98,99,113,126,128}
(1-based).  Smaller layouts remap each active position proportionally
onto the corresponding block; positions that no longer fit are dropped.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from ._rng import keyed_rng
from .data import ColumnSchema, KnockoffMatrix, MixedDataset
from .errors import HetknockError
from .filter import evaluate_selection, select
from .forest import ForestParams
from .importance import MlpConfig, WStatistics
from .importance.lasso import lasso_max_statistics, lcd_statistics
from .importance.mald import gini_statistics, mald_statistics
from .knockoffs import (
    PERMUTE_RESIDUALS,
    SECOND_ORDER_RESIDUALS,
    ResidualKnockoffGenerator,
    conditional_residual_knockoffs,
    scip_forest_knockoffs,
    second_order_knockoffs,
)


@dataclass(frozen=True)
class SimConfig:
    """Covariate generation settings; block sizes must add up to p."""

    n: int = 1024
    p: int = 128
    n_numeric: int = 96
    n_cat2: int = 16
    n_cat3: int = 16
    beta: float = 8.0
    modes: int = 5
    rho: float = 0.5
    mode_delta: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n_numeric + self.n_cat2 + self.n_cat3 != self.p:
            raise ValueError("n_numeric + n_cat2 + n_cat3 must equal p")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.modes < 1:
            raise ValueError("modes must be >= 1")
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")


def _mixture_quantile(prob: float, mode_means: np.ndarray) -> float:
    """Quantile of an equal-weight Gaussian mixture with unit variances."""
    lo = float(mode_means.min()) - 12.0
    hi = float(mode_means.max()) + 12.0
    return brentq(lambda t: norm.cdf(t - mode_means).mean() - prob, lo, hi, xtol=1e-12)


def gen_mixture_covariates(config: SimConfig) -> tuple[MixedDataset, np.ndarray]:
    """Draw covariates from an m-mode Gaussian mixture with shared AR(1)
    covariance and mode means of +-mode_delta on a seeded sign pattern.

    Categorical blocks threshold their latent coordinate at the mixture's
    equal-mass quantiles, so marginal level frequencies are uniform.
    Returns the dataset and the per-row mode labels (0-based).
    """
    n, p, m = config.n, config.p, config.modes
    signs = np.where(keyed_rng(config.seed, "mode_means").random((m, p)) < 0.5, -1.0, 1.0)
    means = config.mode_delta * signs

    rng = keyed_rng(config.seed, "covariates")
    labels = rng.integers(0, m, size=n)
    eps = rng.standard_normal((n, p))
    z = np.empty((n, p))
    z[:, 0] = eps[:, 0]
    scale = math.sqrt(1.0 - config.rho**2)
    for j in range(1, p):
        z[:, j] = config.rho * z[:, j - 1] + scale * eps[:, j]
    latent = means[labels] + z

    values = np.empty((n, p))
    schema: list[ColumnSchema] = []
    for j in range(p):
        if j < config.n_numeric:
            values[:, j] = latent[:, j]
            schema.append(ColumnSchema(f"x{j + 1}", "numeric"))
            continue
        K = 2 if j < config.n_numeric + config.n_cat2 else 3
        cuts = [_mixture_quantile(k / K, means[:, j]) for k in range(1, K)]
        values[:, j] = 1.0 + (latent[:, j][:, None] > np.asarray(cuts)[None, :]).sum(axis=1)
        schema.append(ColumnSchema(f"x{j + 1}", "categorical", K))
    return MixedDataset(values, schema), labels


# canonical active positions inside each block of the p=128 layout
_NUMERIC_ACTIVE = (2, 7, 31, 86, 87)          # positions within the 96 numeric columns
_CAT2_ACTIVE = (2, 3)                         # positions within the 16 two-level columns
_CAT3_ACTIVE = (1, 14, 16)                    # positions within the 16 three-level columns
_NUMERIC_SIGNS = (1.0, -1.0, 1.0, -1.0, 1.0)
_CAT2_COEFS = ((-2.0, 2.0), (-2.0, 2.0))
_CAT3_COEFS = ((1.0, -2.0, -2.0), (-2.0, -1.0, 1.0), (2.0, -2.0, 1.0))
_NONLINEAR_FUNCS = ("cauchy", "log", "sin")   # first three numeric actives
_NONLINEAR_SIGNS = (1.0, -1.0, 1.0)
_CANONICAL_BLOCKS = (96, 16, 16)


def nonlinear_function_registry() -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    """Named nonlinear transforms, calibrated to unit variance on N(0,1)
    input; ``interaction`` is the two-argument first-order form."""
    return {
        "cauchy": lambda x: 3.76 / (1.0 + x**2),
        "log": lambda x: 1.94 * np.log(1.0 + x**2),
        "square": lambda x: 0.7 * x**2,
        "sin": lambda x: 1.42 * np.sin(2.0 * np.pi * x),
        "cos": lambda x: 1.42 * np.cos(2.0 * np.pi * x),
        "square_root": lambda x: 2.86 * np.sqrt(np.abs(x)),
        "linear": lambda x: x,
        "interaction": lambda a, b: a * b - 0.25 * a + 0.25 * b,
    }


@dataclass(frozen=True)
class OutcomeSpec:
    """Additive outcome: named transforms of numeric columns, per-level
    coefficients for categorical columns, pairwise interactions, and a
    standard-normal noise term."""

    kind: str = "custom"
    numeric_terms: tuple = ()        # (column, function name, coefficient)
    categorical_terms: tuple = ()    # (column, per-level coefficient tuple)
    interaction_terms: tuple = ()    # (column a, column b, coefficient)

    def active_columns(self) -> tuple[int, ...]:
        cols = {c for c, _, _ in self.numeric_terms}
        cols |= {c for c, _ in self.categorical_terms}
        for a, b, _ in self.interaction_terms:
            cols |= {a, b}
        return tuple(sorted(cols))


def _remap_block(positions: Sequence[int], orig_size: int, new_size: int) -> list[int]:
    """Proportional remap of 1-based in-block positions; collisions probe
    the nearest free slot, overflow drops the position."""
    out: list[int] = []
    taken: set[int] = set()
    for pos in positions:
        if new_size <= 0:
            continue
        idx = min(new_size, max(1, math.ceil(pos * new_size / orig_size)))
        if idx in taken:
            for step in range(1, new_size + 1):
                if idx + step <= new_size and idx + step not in taken:
                    idx = idx + step
                    break
                if idx - step >= 1 and idx - step not in taken:
                    idx = idx - step
                    break
            else:
                continue
        taken.add(idx)
        out.append(idx)
    return out


def _blocks(schema: Sequence[ColumnSchema]):
    numeric = [j for j, c in enumerate(schema) if not c.is_categorical]
    cat2 = [j for j, c in enumerate(schema) if c.is_categorical and c.levels == 2]
    cat3 = [j for j, c in enumerate(schema) if c.is_categorical and c.levels == 3]
    return numeric, cat2, cat3


def _mapped_active(schema: Sequence[ColumnSchema]):
    numeric, cat2, cat3 = _blocks(schema)
    b0, b1, b2 = _CANONICAL_BLOCKS
    num = [numeric[i - 1] for i in _remap_block(_NUMERIC_ACTIVE, b0, len(numeric))]
    c2 = [cat2[i - 1] for i in _remap_block(_CAT2_ACTIVE, b1, len(cat2))]
    c3 = [cat3[i - 1] for i in _remap_block(_CAT3_ACTIVE, b2, len(cat3))]
    return num, c2, c3


def _categorical_spec_terms(c2: Sequence[int], c3: Sequence[int], beta: float):
    terms = []
    for col, coefs in zip(c2, _CAT2_COEFS):
        terms.append((col, tuple(beta * c for c in coefs)))
    for col, coefs in zip(c3, _CAT3_COEFS):
        terms.append((col, tuple(beta * c for c in coefs)))
    return tuple(terms)


def linear_outcome_spec(schema: Sequence[ColumnSchema], beta: float) -> OutcomeSpec:
    num, c2, c3 = _mapped_active(schema)
    numeric_terms = tuple(
        (col, "linear", beta * sign) for col, sign in zip(num, _NUMERIC_SIGNS)
    )
    return OutcomeSpec(
        kind="linear",
        numeric_terms=numeric_terms,
        categorical_terms=_categorical_spec_terms(c2, c3, beta),
    )


def nonlinear_outcome_spec(schema: Sequence[ColumnSchema], beta: float) -> OutcomeSpec:
    num, c2, c3 = _mapped_active(schema)
    numeric_terms = tuple(
        (col, fn, beta * sign)
        for col, fn, sign in zip(num[:3], _NONLINEAR_FUNCS, _NONLINEAR_SIGNS)
    )
    interactions = ()
    if len(num) >= 5:
        interactions = ((num[3], num[4], beta),)
    return OutcomeSpec(
        kind="nonlinear",
        numeric_terms=numeric_terms,
        categorical_terms=_categorical_spec_terms(c2, c3, beta),
        interaction_terms=interactions,
    )


def evaluate_outcome(spec: OutcomeSpec, X: MixedDataset, seed: int = 0) -> np.ndarray:
    """y = sum of the spec's terms + N(0,1) noise."""
    registry = nonlinear_function_registry()
    y = np.zeros(X.n)
    for col, fn, coef in spec.numeric_terms:
        if col >= X.p or X.schema[col].is_categorical:
            raise HetknockError(f"numeric term references invalid column {col}")
        y += coef * registry[fn](X.values[:, col])
    for a, b, coef in spec.interaction_terms:
        if max(a, b) >= X.p:
            raise HetknockError("interaction term references a missing column")
        y += coef * registry["interaction"](X.values[:, a], X.values[:, b])
    for col, coefs in spec.categorical_terms:
        schema = X.schema[col] if col < X.p else None
        if schema is None or not schema.is_categorical or len(coefs) != schema.levels:
            raise HetknockError(f"categorical term does not fit column {col}")
        levels = X.values[:, col].astype(np.int64)
        y += np.asarray(coefs)[levels - 1]
    return y + keyed_rng(seed, "outcome_noise").standard_normal(X.n)


def linear_outcome(X: MixedDataset, beta: float, seed: int = 0) -> np.ndarray:
    return evaluate_outcome(linear_outcome_spec(X.schema, beta), X, seed)


def nonlinear_outcome(X: MixedDataset, beta: float, seed: int = 0) -> np.ndarray:
    return evaluate_outcome(nonlinear_outcome_spec(X.schema, beta), X, seed)


@dataclass(frozen=True)
class KnockoffSpec:
    """Which generator to run, and with what knobs."""

    method: str = "second_order"  # second_order | conditional_residual | scip
    residual_gen: Optional[str] = None  # default: second_order for CR, permute for SCIP
    forest: ForestParams = ForestParams(n_trees=50, min_node_size=20)

    def generate(self, X: MixedDataset, seed: int, n_jobs: int = 1) -> KnockoffMatrix:
        if self.method == "second_order":
            return second_order_knockoffs(X, seed=seed)
        if self.method == "conditional_residual":
            gen = ResidualKnockoffGenerator(self.residual_gen or SECOND_ORDER_RESIDUALS, seed)
            return conditional_residual_knockoffs(
                X, replace(self.forest, seed=seed), gen, n_jobs=n_jobs
            )
        if self.method == "scip":
            gen = ResidualKnockoffGenerator(self.residual_gen or PERMUTE_RESIDUALS, seed)
            return scip_forest_knockoffs(X, replace(self.forest, seed=seed), gen)
        raise ValueError(f"unknown knockoff method {self.method!r}")


@dataclass(frozen=True)
class StatisticSpec:
    """Which W statistic to compute, and with what knobs."""

    method: str = "lcd"  # lcd | lasso_max | mald_forest | mald_mlp | gini
    b: Optional[float] = None
    r: float = 1.0
    aggregate: str = "max"
    n_folds: int = 5
    forest: ForestParams = ForestParams(n_trees=100, min_node_size=10)
    mlp: MlpConfig = MlpConfig()

    def compute(self, y, X: MixedDataset, Xt: KnockoffMatrix, seed: int) -> WStatistics:
        if self.method == "lcd":
            return lcd_statistics(X, Xt, y, aggregate=self.aggregate,
                                  n_folds=self.n_folds, seed=seed)
        if self.method == "lasso_max":
            return lasso_max_statistics(X, Xt, y, aggregate=self.aggregate)
        if self.method == "mald_forest":
            return mald_statistics(y, X, Xt, backend="forest", b=self.b, r=self.r,
                                   forest_params=replace(self.forest, seed=seed))
        if self.method == "mald_mlp":
            return mald_statistics(y, X, Xt, backend="mlp", b=self.b, r=self.r,
                                   mlp_config=replace(self.mlp, seed=seed))
        if self.method == "gini":
            return gini_statistics(y, X, Xt, replace(self.forest, seed=seed))
        raise ValueError(f"unknown statistic method {self.method!r}")


@dataclass(frozen=True)
class RepResult:
    rep: int
    fdp: float
    power: float
    n_selected: int
    seconds: float
    error: Optional[str] = None


@dataclass
class ExperimentResult:
    config: SimConfig
    outcome_kind: str
    knockoff: KnockoffSpec
    statistic: StatisticSpec
    q: float
    offset: int
    reps: list[RepResult] = field(default_factory=list)

    @property
    def _ok(self) -> list[RepResult]:
        return [r for r in self.reps if r.error is None]

    @property
    def mean_fdr(self) -> float:
        ok = self._ok
        return float(np.mean([r.fdp for r in ok])) if ok else float("nan")

    @property
    def mean_power(self) -> float:
        ok = self._ok
        return float(np.mean([r.power for r in ok])) if ok else float("nan")

    @property
    def se_fdr(self) -> float:
        ok = self._ok
        if len(ok) < 2:
            return float("nan")
        return float(np.std([r.fdp for r in ok], ddof=1) / math.sqrt(len(ok)))

    @property
    def se_power(self) -> float:
        ok = self._ok
        if len(ok) < 2:
            return float("nan")
        return float(np.std([r.power for r in ok], ddof=1) / math.sqrt(len(ok)))

    def rows(self) -> list[dict]:
        return [
            {
                "rep": r.rep,
                "method": self.knockoff.method,
                "statistic": self.statistic.method,
                "q": self.q,
                "fdp": r.fdp,
                "power": r.power,
                "n_selected": r.n_selected,
                "seconds": r.seconds,
            }
            for r in self.reps
        ]


def _mix(seed: int, *parts) -> int:
    h = int(seed) & ((1 << 63) - 1)
    for part in parts:
        h = (h * 0x100000001B3 + int(part) + 0x9E3779B9) & ((1 << 63) - 1)
    return h


def _resolve_outcome(outcome, schema, beta) -> tuple[str, OutcomeSpec]:
    if isinstance(outcome, OutcomeSpec):
        return outcome.kind, outcome
    if outcome == "linear":
        return "linear", linear_outcome_spec(schema, beta)
    if outcome == "nonlinear":
        return "nonlinear", nonlinear_outcome_spec(schema, beta)
    raise ValueError(f"unknown outcome {outcome!r}")


def _one_rep(rep, config, outcome, knockoff, statistic, q, offset, seed):
    t0 = _time.perf_counter()
    rep_seed = _mix(seed, rep)
    try:
        X, _ = gen_mixture_covariates(replace(config, seed=_mix(rep_seed, 1)))
        _, spec = _resolve_outcome(outcome, X.schema, config.beta)
        y = evaluate_outcome(spec, X, seed=_mix(rep_seed, 2))
        Xt = knockoff.generate(X, seed=_mix(rep_seed, 3))
        w = statistic.compute(y, X, Xt, seed=_mix(rep_seed, 4))
        result = select(w, q=q, offset=offset)
        fdp, power = evaluate_selection(result.selected, spec.active_columns())
        return RepResult(rep, fdp, power, len(result.selected),
                         _time.perf_counter() - t0)
    except Exception as exc:  # keep the sweep alive; the row records the failure
        return RepResult(rep, float("nan"), float("nan"), 0,
                         _time.perf_counter() - t0, error=f"{type(exc).__name__}: {exc}")


def run_experiment(
    config: SimConfig,
    outcome: Union[str, OutcomeSpec],
    knockoff: KnockoffSpec,
    statistic: StatisticSpec,
    q: float = 0.2,
    n_reps: int = 100,
    seed: int = 0,
    offset: int = 1,
    n_jobs: int = 1,
) -> ExperimentResult:
    """Replicated generate -> knockoff -> W -> select -> score loop.

    Each replicate derives its streams from (seed, rep), so results do not
    depend on worker count or completion order.  Failures are recorded on
    the replicate's row instead of aborting the sweep.
    """
    outcome_kind = outcome.kind if isinstance(outcome, OutcomeSpec) else str(outcome)
    result = ExperimentResult(config, outcome_kind, knockoff, statistic, q, offset)
    if n_jobs > 1:
        from joblib import Parallel, delayed

        result.reps = list(
            Parallel(n_jobs=n_jobs)(
                delayed(_one_rep)(rep, config, outcome, knockoff, statistic, q, offset, seed)
                for rep in range(n_reps)
            )
        )
    else:
        result.reps = [
            _one_rep(rep, config, outcome, knockoff, statistic, q, offset, seed)
            for rep in range(n_reps)
        ]
    return result
