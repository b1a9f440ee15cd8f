"""From-scratch classifiers with stratified CV, grid search and F1 scoring."""

from .cv import (
    FOREST_GRID,
    LOGISTIC_GRID,
    GridSearchResult,
    ModelSpec,
    downsample_indices,
    downsample_majority,
    f1,
    grid_search_cv,
    stratified_kfold,
)
from .forest import fit_forest, predict_proba_forest
from .logistic import (
    fit_logistic,
    log_loss,
    log_loss_grad,
    objective,
    objective_grad,
    predict_proba_logistic,
)
from .model import FAMILIES, MODEL_SCHEMA_VERSION, Standardizer, TrainedModel, train

__all__ = [
    "FAMILIES",
    "FOREST_GRID",
    "LOGISTIC_GRID",
    "MODEL_SCHEMA_VERSION",
    "GridSearchResult",
    "ModelSpec",
    "Standardizer",
    "TrainedModel",
    "downsample_indices",
    "downsample_majority",
    "f1",
    "fit_forest",
    "fit_logistic",
    "grid_search_cv",
    "log_loss",
    "log_loss_grad",
    "objective",
    "objective_grad",
    "predict_proba_forest",
    "predict_proba_logistic",
    "stratified_kfold",
    "train",
]
