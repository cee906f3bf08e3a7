"""Augmented weighted average treatment effect estimation with four variance estimators."""

from .data import Dataset, DesignSpec, design_matrix, load_csv, save_csv
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    EstimationError,
    SandwichUnobtainable,
    TooFewSuccessfulReplicates,
    WateError,
)
from .estimands import ATC, ATE, ATEN, ATM, ATO, ATT, PAPER_ESTIMANDS, Estimand
from .estimator import (
    IF_I,
    IF_II,
    augmented_wate,
    ess_by_arm,
    effective_sample_size,
    fit_models,
    fit_nuisances,
    influence_vector,
    weighted_asmd,
)
from .variance import (
    VarianceEstimate,
    WaldInterval,
    bootstrap_post_weighting,
    bootstrap_standard,
    sandwich_variance,
    solve_theta,
    wald_ci,
    wild_bootstrap,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DesignSpec",
    "design_matrix",
    "load_csv",
    "save_csv",
    "ConfigError",
    "DataError",
    "DomainError",
    "EstimationError",
    "SandwichUnobtainable",
    "TooFewSuccessfulReplicates",
    "WateError",
    "ATC",
    "ATE",
    "ATEN",
    "ATM",
    "ATO",
    "ATT",
    "PAPER_ESTIMANDS",
    "Estimand",
    "IF_I",
    "IF_II",
    "augmented_wate",
    "ess_by_arm",
    "effective_sample_size",
    "fit_models",
    "fit_nuisances",
    "influence_vector",
    "weighted_asmd",
    "VarianceEstimate",
    "WaldInterval",
    "bootstrap_post_weighting",
    "bootstrap_standard",
    "sandwich_variance",
    "solve_theta",
    "wald_ci",
    "wild_bootstrap",
]
