"""Cross-fitted multiply robust estimation of natural direct and indirect effects
when a binary intermediate confounder is monotone in the treatment."""
from .crossfit import FoldPlan, make_folds
from .dataset import ColumnSpec, Dataset, DataError, DiagnosticsReport, diagnose, load_csv, write_csv
from .estimator import (
    EffectEstimates,
    EstimandSpec,
    EstimationError,
    EstimatorConfig,
    default_variant,
    estimate,
)
from .learners import LearnerSpec, default_stack, intercept_only

__version__ = "0.1.0"

__all__ = [
    "ColumnSpec",
    "DataError",
    "Dataset",
    "DiagnosticsReport",
    "EffectEstimates",
    "EstimandSpec",
    "EstimationError",
    "EstimatorConfig",
    "FoldPlan",
    "LearnerSpec",
    "default_stack",
    "default_variant",
    "diagnose",
    "estimate",
    "intercept_only",
    "load_csv",
    "make_folds",
    "write_csv",
]
