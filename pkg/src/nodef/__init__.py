"""Conversion-rate prediction under delayed feedback.

A kernel-defined hazard gives the delay between click and conversion a
nonparametric, possibly multimodal and defective distribution; a logistic
classifier gives the eventual-conversion probability.  Both are trained
jointly by EM, treating the unconverted samples' true labels as hidden.
Exponential-delay and unobserved-as-negative baselines, a synthetic data
generator, metrics and a CLI round out the package.
"""

from .baselines import DfmParams, dfm_predict, fit_dfm, fit_naive
from .data import (
    SplitSpec,
    TimeTransform,
    generate_synthetic,
    load_csv,
    split_by_click_date,
)
from .delay import (
    delay_density,
    hazard,
    predict_by_time,
    predict_eventual,
    survival,
)
from .kernel import gauss_kernel, kernel_integral_0_to, kernel_integral_to_inf, make_grid
from .metrics import MetricsReport, accuracy, auc, evaluate, grid_search, log_loss
from .model_io import ModelBundle, load_model, save_model, train_bundle
from .trainer import FitResult, NumericalError, e_step, fit, q_objective
from .types import Dataset, NoDeFParams, PseudoGrid, Sample, TrainConfig

__version__ = "0.1.0"

__all__ = [
    "Sample", "Dataset", "PseudoGrid", "NoDeFParams", "TrainConfig",
    "gauss_kernel", "kernel_integral_0_to", "kernel_integral_to_inf", "make_grid",
    "hazard", "survival", "delay_density", "predict_eventual", "predict_by_time",
    "e_step", "q_objective", "fit", "FitResult", "NumericalError",
    "fit_naive", "fit_dfm", "DfmParams", "dfm_predict",
    "generate_synthetic", "load_csv", "split_by_click_date", "TimeTransform", "SplitSpec",
    "log_loss", "accuracy", "auc", "evaluate", "grid_search", "MetricsReport",
    "ModelBundle", "train_bundle", "save_model", "load_model",
    "__version__",
]
