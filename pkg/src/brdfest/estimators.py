"""scikit-learn style estimators wrapping the two regressors.

X is a sequence of scene records (from brdfest.dataset); y is an
optional (n, 5) array of physical Ward parameters overriding the
records' ground truth. predict() returns clamped physical parameters,
and score() the negative pooled normalized RMSE (higher is better), so
the estimators drop into sklearn model selection utilities.
"""

import tempfile
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .checkpoint import load_checkpoint
from .evaluation import eval_rmse, predict_physical, save_training_checkpoint
from .losses import LossConfig
from .training import TrainConfig, fit_model
from .validation import check_scene_records, records_with_targets


class _WardRegressor(BaseEstimator, RegressorMixin):
    _model_tag = None

    def _loss_config(self):
        return LossConfig(metric=self.metric, lambda_ec=self.lambda_ec, lambda_g=self.lambda_g)

    def _train_config(self):
        raise NotImplementedError

    def fit(self, X, y=None):
        records = records_with_targets(X, y)
        tcfg = self._train_config()
        lcfg = self._loss_config()
        result = fit_model(records, [], tcfg, lcfg)
        path = Path(tempfile.mkdtemp(prefix="brdfest_")) / "estimator.ckpt"
        save_training_checkpoint(path, tcfg, lcfg, result, which="final")
        self.checkpoint_ = load_checkpoint(path)
        self.checkpoint_path_ = str(path)
        self.n_parameters_ = self.checkpoint_.n_parameters
        self.train_log_ = result.log
        return self

    def _check_fitted(self):
        if not hasattr(self, "checkpoint_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def predict(self, X):
        """Clamped physical parameters (r, g, b, rho_s, alpha), (n, 5)."""
        self._check_fitted()
        records = check_scene_records(X)
        return np.stack(
            [predict_physical(self.checkpoint_, rec, seed=self.seed) for rec in records]
        )

    def score(self, X, y=None):
        """Negative pooled normalized RMSE (sklearn: higher is better)."""
        self._check_fitted()
        records = records_with_targets(X, y)
        return -eval_rmse(self.checkpoint_, records, seed=self.seed)["rmse_overall"]

    def save(self, path):
        self._check_fitted()
        from .checkpoint import save_checkpoint

        return save_checkpoint(
            path,
            self.checkpoint_.architecture,
            self.checkpoint_.params,
            self.checkpoint_.norm_stats,
            self.checkpoint_.config,
        )


class HemiCNNRegressor(_WardRegressor):
    """Hemisphere-image convolutional regressor."""

    _model_tag = "hemicnn"

    def __init__(
        self,
        metric="rmse1",
        lambda_ec=0.01,
        lambda_g=1.0,
        n_minibatches=2000,
        batch_size=16,
        learning_rate=None,
        resolution=8,
        n_images=25,
        seed=0,
        dtype="float32",
    ):
        self.metric = metric
        self.lambda_ec = lambda_ec
        self.lambda_g = lambda_g
        self.n_minibatches = n_minibatches
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.resolution = resolution
        self.n_images = n_images
        self.seed = seed
        self.dtype = dtype

    def _train_config(self):
        return TrainConfig(
            model="hemicnn",
            n_minibatches=self.n_minibatches,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            dtype=self.dtype,
            hemicnn_resolution=self.resolution,
            hemicnn_images=self.n_images,
        )


class GroupletRegressor(_WardRegressor):
    """Observation-sampling set regressor (fast/slow differ only in the
    node count used at inference)."""

    _model_tag = "grouplet-fast"

    def __init__(
        self,
        metric="rmse1",
        lambda_ec=0.01,
        lambda_g=1.0,
        n_minibatches=2000,
        batch_size=16,
        learning_rate=None,
        momentum=0.9,
        n_nodes=20,
        obs_per_node=10,
        seed=0,
        dtype="float32",
    ):
        self.metric = metric
        self.lambda_ec = lambda_ec
        self.lambda_g = lambda_g
        self.n_minibatches = n_minibatches
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.n_nodes = n_nodes
        self.obs_per_node = obs_per_node
        self.seed = seed
        self.dtype = dtype

    def _train_config(self):
        return TrainConfig(
            model="grouplet-fast",
            n_minibatches=self.n_minibatches,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            seed=self.seed,
            dtype=self.dtype,
            grouplet_nodes=self.n_nodes,
            grouplet_obs=self.obs_per_node,
        )
