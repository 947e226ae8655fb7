"""Ridgeless least-squares forecasting with intentionally added noise predictors."""

from .dgp import FactorModelSpec, augment_with_noise, draw_oos, draw_sample
from .errors import (
    ConfigError,
    DataError,
    InvalidInputError,
    NumericalError,
    RidgelessError,
    UndefinedMetricError,
)
from .estimators import (
    CvConfig,
    LinearPredictor,
    fit_lasso_cv,
    fit_ols,
    fit_pca_regression,
    fit_pseudo_ols,
    fit_ridge_cv,
)
from .linalg import min_norm_solve, reduced_svd, ridge_solve, sym_eig

__version__ = "0.1.0"
