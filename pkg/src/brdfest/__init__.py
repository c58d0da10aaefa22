"""brdfest: Ward BRDF estimation from multi-view RGBD observations.

Synthetic multi-view data with known materials, two lightweight
set-invariant regressors trained on a minimal reverse-mode autodiff
core, and an evaluation suite (normalized RMSE, coverage sweeps,
rendered comparisons).
"""

from .brdf import PerceptualBRDF, WardBRDF, brdf_distance, eval_ward, from_perceptual, to_perceptual
from .dataset import Dataset, DatasetConfig, generate_dataset, load_dataset
from .estimators import GroupletRegressor, HemiCNNRegressor
from .evaluation import coverage_sweep, eval_rmse, model_report, render_comparison
from .losses import LossConfig
from .training import TrainConfig, fit_model

__version__ = "0.1.0"

__all__ = [
    "WardBRDF",
    "PerceptualBRDF",
    "eval_ward",
    "to_perceptual",
    "from_perceptual",
    "brdf_distance",
    "Dataset",
    "DatasetConfig",
    "generate_dataset",
    "load_dataset",
    "HemiCNNRegressor",
    "GroupletRegressor",
    "LossConfig",
    "TrainConfig",
    "fit_model",
    "eval_rmse",
    "coverage_sweep",
    "model_report",
    "render_comparison",
    "__version__",
]
