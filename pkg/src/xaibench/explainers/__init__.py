"""Local attribution methods for tree models."""
from .base import (
    LOG_ODDS,
    METHODS,
    PROBABILITY,
    SHAPLEY_METHODS,
    Attribution,
    Background,
    ExplainerConfig,
    ExplainerError,
    predict_fn,
)
from .batch import BatchResult, explain, explain_batch, instance_seed
from .ridge import weighted_ridge
from .shapley import exact_shapley, kernel_shap, sampling_shap, shapley_kernel_weight
from .surrogate import TrainingStats, lime, local_surrogate
from .treebased import tree_interpreter, tree_shap

__all__ = [
    "Attribution", "Background", "BatchResult", "ExplainerConfig", "ExplainerError", "LOG_ODDS",
    "METHODS", "PROBABILITY", "SHAPLEY_METHODS", "TrainingStats", "exact_shapley", "explain",
    "explain_batch", "instance_seed", "kernel_shap", "lime", "local_surrogate", "predict_fn",
    "sampling_shap", "shapley_kernel_weight", "tree_interpreter", "tree_shap", "weighted_ridge",
]
