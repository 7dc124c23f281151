"""Regression model zoo: linear, random forest, boosting, MLP and stacking."""

from .base import FitError, Predictor, load_predictor, predictor_from_dict, save_predictor
from .evaluation import (
    BASE_MODELS,
    MODEL_LABELS,
    AccuracyReport,
    default_zoo,
    evaluate_models,
    fit_zoo,
    mse,
    select_top_m,
)
from .linear import LinearModel, fit_linear, ols
from .mlp import MLPModel, fit_mlp
from .stacking import StackingModel, fit_stacking
from .trees import TreeEnsemble, fit_gbt, fit_random_forest

__all__ = [
    "AccuracyReport", "BASE_MODELS", "FitError", "LinearModel", "MLPModel", "MODEL_LABELS",
    "Predictor", "StackingModel", "TreeEnsemble", "default_zoo", "evaluate_models", "fit_gbt",
    "fit_linear", "fit_mlp", "fit_random_forest", "fit_stacking", "fit_zoo", "load_predictor",
    "mse", "ols", "predictor_from_dict", "save_predictor", "select_top_m",
]
