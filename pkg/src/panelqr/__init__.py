"""Bayesian mixed-effects mean and quantile regression for balanced panels."""

__version__ = "0.1.0"

from .errors import (ChainFormatError, ConfigError, DomainError, IngestionError, ManifestMismatchError,  # noqa: E402
                     PanelQRError, SingularMatrixError)
from .panel import CovariateRecipe, PanelDataset, PriorSpec, build_design, ihs  # noqa: E402
from .gibbs import ChainResult, RunConfig, run_mean_gibbs, run_quantile_gibbs  # noqa: E402
from .fit import FitReport, SummaryTable, fit_report, summarize  # noqa: E402
from .estimators import LongitudinalMeanRegressor, LongitudinalQuantileRegressor  # noqa: E402

__all__ = [
    "ChainFormatError", "ChainResult", "ConfigError", "CovariateRecipe", "DomainError",
    "FitReport", "IngestionError", "ManifestMismatchError", "LongitudinalMeanRegressor", "LongitudinalQuantileRegressor",
    "PanelDataset", "PanelQRError", "PriorSpec", "RunConfig", "SingularMatrixError",
    "SummaryTable", "build_design", "fit_report", "ihs", "run_mean_gibbs", "run_quantile_gibbs",
    "summarize",
]
