"""Feature statistics comparing original columns against their knockoffs."""

from .base import Encoded, WStatistics, aggregate_group, augmented_encoding, one_hot
from .lasso import (
    LassoFit,
    default_lambda_grid,
    lasso_cv,
    lasso_max_statistics,
    lasso_path,
    lcd_statistics,
)
from .mald import (
    ForestMaldModel,
    MlpMaldModel,
    default_bandwidth,
    fit_mald_model,
    gini_statistics,
    mald_categorical,
    mald_numeric,
    mald_statistics,
)
from .mlp import Mlp, MlpConfig, fit_mlp, mlp_input_gradients, mlp_predict

__all__ = [
    "Encoded",
    "WStatistics",
    "aggregate_group",
    "augmented_encoding",
    "one_hot",
    "LassoFit",
    "default_lambda_grid",
    "lasso_cv",
    "lasso_max_statistics",
    "lasso_path",
    "lcd_statistics",
    "ForestMaldModel",
    "MlpMaldModel",
    "default_bandwidth",
    "fit_mald_model",
    "gini_statistics",
    "mald_categorical",
    "mald_numeric",
    "mald_statistics",
    "Mlp",
    "MlpConfig",
    "fit_mlp",
    "mlp_input_gradients",
    "mlp_predict",
]
