"""Knockoff generation and FDR-controlled feature selection for mixed
continuous/categorical data: forest conditional-residual knockoffs,
sequential conditional forests, second-order Gaussian knockoffs, local
derivative (MALD) and lasso importance statistics, the knockoff+ filter,
and a replicated simulation harness."""

from .data import (
    CellViolation,
    ColumnSchema,
    KnockoffMatrix,
    MixedDataset,
    Provenance,
    ResidualMatrix,
    swap_columns,
    validate,
)
from .errors import HetknockError, NumericalError, SchemaError
from .evaluation import CvReport, age_transform, cv_ols_mse
from .filter import SelectionResult, evaluate_selection, knockoff_threshold, select
from .forest import Forest, ForestParams, fit_forest, oob_predict, predict, predict_proba
from .importance import (
    LassoFit,
    Mlp,
    MlpConfig,
    WStatistics,
    fit_mlp,
    gini_statistics,
    lasso_cv,
    lasso_max_statistics,
    lasso_path,
    lcd_statistics,
    mald_categorical,
    mald_numeric,
    mald_statistics,
    mlp_input_gradients,
)
from .knockoffs import (
    ExchangeabilityReport,
    ResidualKnockoffGenerator,
    SecondOrderModel,
    conditional_residual_knockoffs,
    exchangeability_diagnostic,
    permute_residuals,
    scip_forest_knockoffs,
    second_order_knockoffs,
    solve_equicorrelated_s,
)
from .sim import (
    ExperimentResult,
    KnockoffSpec,
    OutcomeSpec,
    SimConfig,
    StatisticSpec,
    gen_mixture_covariates,
    linear_outcome,
    nonlinear_function_registry,
    nonlinear_outcome,
    run_experiment,
)

__version__ = "0.1.0"
