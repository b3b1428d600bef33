"""Random forest and feedforward network classifiers over feature vectors."""
from .forest import (FOREST_TREES, MAX_DEPTH, ForestHyperparams, Split, Tree, best_split,
                     features_per_split, gini_impurity)
from .mlp import LAYER_SIZES, MINIBATCH_SIZES, Adam, MlpHyperparams, analytic_gradient
from .model import (FORMAT_VERSION, TrainedModel, load_model, model_bytes, model_from_bytes,
                    predict, predict_proba, save_model, train_forest, train_mlp)

__all__ = [
    "Adam", "FORMAT_VERSION", "FOREST_TREES", "ForestHyperparams", "LAYER_SIZES", "MAX_DEPTH",
    "MINIBATCH_SIZES", "MlpHyperparams", "Split", "TrainedModel", "Tree", "analytic_gradient",
    "best_split", "features_per_split", "gini_impurity", "load_model", "model_bytes",
    "model_from_bytes", "predict", "predict_proba", "save_model", "train_forest", "train_mlp",
]
