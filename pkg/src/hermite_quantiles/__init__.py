"""Online density, CDF and quantile estimates from Gauss-Hermite series."""
from .coefficients import CoefficientVector, fit_batch, update_ewgh, update_static
from .density import CdfCoefficientTable, CdfVariant, cdf, cdf_clamped, cdf_table, pdf, total_mass
from .estimator import (
    DistributionSnapshot,
    EstimatorConfig,
    GaussHermiteEstimator,
    effective_window,
)
from .quantile import QuantileResult, RootFinderSettings, invert_cdf, is_below_quantile, refine
from .special_functions import DomainError
from .standardize import ExpMoments, RunningMoments

__version__ = "0.1.0"

__all__ = [
    "CdfCoefficientTable",
    "CdfVariant",
    "CoefficientVector",
    "DistributionSnapshot",
    "DomainError",
    "EstimatorConfig",
    "ExpMoments",
    "GaussHermiteEstimator",
    "QuantileResult",
    "RootFinderSettings",
    "RunningMoments",
    "cdf",
    "cdf_clamped",
    "cdf_table",
    "effective_window",
    "fit_batch",
    "invert_cdf",
    "is_below_quantile",
    "pdf",
    "refine",
    "total_mass",
    "update_ewgh",
    "update_static",
]
