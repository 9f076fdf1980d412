"""Classifier families: logistic regression, linear SVM, MLP, CNN, LSTM and ResNet."""

from .core import (TrainedModel, as_matrix, fit, init_model, predict_proba, predict_proba_batch,
                   predict_segments, predict_segments_batch)
from .gradcheck import gradient_check
from .io import load_model, save_model
from .spec import FAMILIES, ModelSpec, in_standard_range, standard_grid

__all__ = [
    "FAMILIES", "ModelSpec", "TrainedModel", "as_matrix", "fit", "gradient_check", "in_standard_range",
    "init_model", "load_model", "standard_grid", "predict_proba", "predict_proba_batch",
    "predict_segments", "predict_segments_batch", "save_model",
]
