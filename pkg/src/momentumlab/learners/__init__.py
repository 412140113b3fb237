"""From-scratch learners, metrics and validation utilities."""

from .metrics import CLASSIFICATION, REGRESSION, MetricSet, evaluate, metric_value
from .models import (
    Kind,
    LearnerSpec,
    TrainedModel,
    load_model,
    model_from_dict,
    model_to_dict,
    predict,
    save_model,
    train,
)
from .trees import Tree, grow_tree
from .validation import CvResult, Split, kfold_cv, kfold_indices, split_train_test, tune_rounds

__all__ = [
    "CLASSIFICATION",
    "REGRESSION",
    "CvResult",
    "Kind",
    "LearnerSpec",
    "MetricSet",
    "Split",
    "TrainedModel",
    "Tree",
    "evaluate",
    "grow_tree",
    "kfold_cv",
    "kfold_indices",
    "load_model",
    "metric_value",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "save_model",
    "split_train_test",
    "train",
    "tune_rounds",
]
