"""From-scratch learners, model files and cross-validated model selection."""

from .linear import train_logistic_regression
from .model import (
    TrainedModel,
    check_schema,
    dumps,
    load_model,
    loads,
    predict,
    predict_proba,
    save_model,
)
from .params import (
    DEFAULTS,
    MODEL_KINDS,
    CartParams,
    EnsembleParams,
    GridSearchSpec,
    LinearParams,
    SvmParams,
    canonical_kind,
)
from .selection import GridResult, fit, grid_search, stratified_folds
from .svm import train_svm_rbf
from .trees import (
    boosting_scores,
    feature_importance,
    train_cart,
    train_gradient_boosting,
    train_random_forest,
)

__all__ = [
    "DEFAULTS", "MODEL_KINDS", "CartParams", "EnsembleParams", "GridResult", "GridSearchSpec",
    "LinearParams", "SvmParams", "TrainedModel", "boosting_scores", "canonical_kind",
    "check_schema", "dumps", "feature_importance", "fit", "grid_search", "load_model", "loads",
    "predict", "predict_proba", "save_model", "stratified_folds", "train_cart",
    "train_gradient_boosting", "train_logistic_regression", "train_random_forest",
    "train_svm_rbf",
]
