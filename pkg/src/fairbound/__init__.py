"""Fairness-constrained linear classification with certified risk-difference bounds."""

from .dataset import (
    Dataset,
    PropensityEstimator,
    estimate_propensity,
    load_adult,
    load_csv,
    split_folds,
)
from .fairness import (
    BoundsReport,
    CriterionReport,
    FairnessBudget,
    constraint_free_check,
    equalized_odds,
    equalized_opportunity,
    rd_bounds,
    rd_extremes,
    risk_difference,
    risk_difference_weighted,
    risk_ratio,
    risk_ratio_constraint,
    surrogate_rd,
)
from .solver import (
    LinearModel,
    SolverConfig,
    TrainResult,
    predict,
    train_covariance_baseline,
    train_formulation1,
    train_formulation2,
    train_unconstrained,
)
from .surrogate import GapTransform, Surrogate, get_surrogate, margin_loss

__version__ = "0.1.0"

__all__ = [
    "Dataset", "PropensityEstimator", "estimate_propensity", "load_adult", "load_csv",
    "split_folds", "BoundsReport", "CriterionReport", "FairnessBudget",
    "constraint_free_check", "equalized_odds", "equalized_opportunity", "rd_bounds",
    "rd_extremes", "risk_difference", "risk_difference_weighted", "risk_ratio",
    "risk_ratio_constraint", "surrogate_rd", "LinearModel", "SolverConfig", "TrainResult",
    "predict", "train_covariance_baseline", "train_formulation1", "train_formulation2",
    "train_unconstrained", "GapTransform", "Surrogate", "get_surrogate", "margin_loss",
]
