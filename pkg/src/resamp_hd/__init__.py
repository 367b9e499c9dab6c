"""Resampling-based confidence regions and FWER-controlled multiple tests for
the mean of a high-dimensional Gaussian vector.

Data are K x n matrices (rows are coordinates, columns are observations).
"""

__version__ = "0.1.0"

from .aggregators import LpNorm, OneSidedSup, TwoSidedSup, parse_aggregator
from .errors import (
    CapacityError,
    InfeasibleLevelError,
    StepDownNotConverged,
    UnsupportedGuaranteeError,
    UnsupportedSchemeError,
)
from .mtp import Procedure, evaluate_fwer, evaluate_power, holm, hybrid, single_step, step_down
from .resample import exact_quantile_rademacher, mc_quantile, resampled_expectation, sigma_upper_bound
from .thresholds import (
    BoundedSymmetric,
    Bonferroni,
    ConcBonf,
    Concentration,
    Estimated,
    IteratedQuant,
    Known,
    QuantBonf,
    QuantConc,
    QuantRaw,
    QuantUncentered,
    ThresholdFamily,
    ThresholdSpec,
    confidence_region,
    threshold,
)
from .weights import (
    Bernoulli,
    Efron,
    LeaveOneOut,
    Poisson,
    Rademacher,
    RandomHoldOut,
    VFoldCV,
    constants,
    parse_scheme,
)

__all__ = [
    "__version__",
    "LpNorm", "OneSidedSup", "TwoSidedSup", "parse_aggregator",
    "CapacityError", "InfeasibleLevelError", "StepDownNotConverged", "UnsupportedGuaranteeError",
    "UnsupportedSchemeError",
    "Procedure", "evaluate_fwer", "evaluate_power", "holm", "hybrid", "single_step", "step_down",
    "exact_quantile_rademacher", "mc_quantile", "resampled_expectation", "sigma_upper_bound",
    "BoundedSymmetric", "Bonferroni", "ConcBonf", "Concentration", "Estimated", "IteratedQuant", "Known",
    "QuantBonf", "QuantConc", "QuantRaw", "QuantUncentered", "ThresholdFamily", "ThresholdSpec",
    "confidence_region", "threshold",
    "Bernoulli", "Efron", "LeaveOneOut", "Poisson", "Rademacher", "RandomHoldOut", "VFoldCV", "constants",
    "parse_scheme",
]
