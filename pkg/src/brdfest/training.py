"""Training loops for both regressors.

For physical-parameterization losses the network predicts standardized
targets and the affine de-standardization sits inside the loss graph, so
the losses act on raw parameters while optimization sees unit-scale
outputs. Perceptual losses keep raw outputs: the Lab dimensions span
~100 units, and de-standardizing would multiply the output-layer loss
curvature by std^2, far past the stability bound of the fixed SGD
learning rate. Evaluation-time normalization statistics are computed
either way. Every random draw derives from the seed, making runs
reproducible (and at float64, bit-identical).
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import grouplet, hemicnn
from .autodiff import Tensor
from .brdf import physical_to_perceptual
from .errors import ConfigurationError, NonFiniteLossError
from .losses import LossConfig, loss_total
from .optim import RMSProp, SGDMomentum, zero_grads

MODEL_TAGS = ("hemicnn", "grouplet-fast", "grouplet-slow")
OPTIMIZER_DEFAULTS = {
    "hemicnn": ("rmsprop", 1e-4),
    "grouplet-fast": ("sgd", 0.01),
    "grouplet-slow": ("sgd", 0.01),
}
PAPER_BUDGETS = {"hemicnn": 100_000, "grouplet-fast": 13_000, "grouplet-slow": 13_000}
GROUPLET_PRESET_NODES = {"grouplet-fast": grouplet.FAST_NODES, "grouplet-slow": grouplet.SLOW_NODES}
_INIT_STREAM, _BATCH_STREAM, _SAMPLE_STREAM = 11, 13, 17


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    parameterization: str

    def normalize(self, vectors):
        return (np.asarray(vectors) - self.mean) / self.std

    def denormalize(self, vectors):
        return np.asarray(vectors) * self.std + self.mean

    def to_json(self):
        return {
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "parameterization": self.parameterization,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            mean=np.array(obj["mean"]),
            std=np.array(obj["std"]),
            parameterization=obj["parameterization"],
        )


@dataclass
class TrainConfig:
    model: str = "grouplet-fast"
    n_minibatches: int = 2000
    batch_size: int = 16
    seed: int = 0
    dtype: str = "float32"
    val_interval: int = 200
    learning_rate: float = None
    momentum: float = 0.9
    rmsprop_decay: float = 0.9
    hemicnn_resolution: int = 8
    hemicnn_images: int = 25
    grouplet_nodes: int = None  # preset by model tag when None
    grouplet_obs: int = 10

    def __post_init__(self):
        if self.model not in MODEL_TAGS:
            raise ConfigurationError(f"unknown model {self.model!r}; expected one of {MODEL_TAGS}")
        if self.n_minibatches < 0 or self.batch_size < 1:
            raise ConfigurationError("budgets must be non-negative and batch size positive")
        if self.grouplet_nodes is None and self.model in GROUPLET_PRESET_NODES:
            self.grouplet_nodes = GROUPLET_PRESET_NODES[self.model]
        if self.learning_rate is None:
            self.learning_rate = OPTIMIZER_DEFAULTS[self.model][1]

    def to_json(self):
        out = dict(self.__dict__)
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


def targets_for(records, parameterization):
    physical = np.stack([r.material.to_vector() for r in records])
    if parameterization == "perceptual":
        return physical_to_perceptual(physical)
    return physical


def compute_norm_stats(records, parameterization) -> NormStats:
    """Per-dimension mean and population std of the ground-truth targets."""
    if not records:
        raise ConfigurationError("cannot compute normalization statistics of an empty split")
    vectors = targets_for(records, parameterization)
    mean = vectors.mean(axis=0)
    std = vectors.std(axis=0)
    if np.any(std <= 0):
        raise ConfigurationError(
            f"degenerate (zero-std) target dimension(s) {np.where(std <= 0)[0].tolist()}; "
            "regenerate the dataset with wider parameter ranges"
        )
    return NormStats(mean=mean, std=std, parameterization=parameterization)


class HemiCNNInputs:
    """Caches the deterministic hemisphere-image stack per scene."""

    def __init__(self, records, n_images, resolution):
        self.records = records
        self.n_images = n_images
        self.resolution = resolution
        self._cache = {}

    def scene_images(self, index):
        if index not in self._cache:
            rec = self.records[index]
            self._cache[index] = hemicnn.scene_images(rec.voxels, self.n_images, self.resolution)
        return self._cache[index]

    def batch(self, indices, rng=None):
        images = np.stack([self.scene_images(i) for i in indices])
        stats = [
            (
                np.stack([f.f_bar for f in self.records[i].frames]),
                np.stack([f.b_bar for f in self.records[i].frames]),
            )
            for i in indices
        ]
        return {"images": images}, stats


class GroupletInputs:
    """Draws fresh node/observation samples each call (training
    augmentation); evaluation passes a dedicated rng for determinism."""

    def __init__(self, records, n_nodes, n_obs):
        self.records = records
        self.n_nodes = n_nodes
        self.n_obs = n_obs

    def batch(self, indices, rng):
        feats = np.empty((len(indices), self.n_nodes, self.n_obs, grouplet.OBS_FEATURES))
        normals = np.empty((len(indices), self.n_nodes, 3))
        stats = []
        for row, i in enumerate(indices):
            rec = self.records[i]
            f, n, used = grouplet.scene_node_batch(rec.voxels, self.n_nodes, self.n_obs, rng)
            feats[row] = f
            normals[row] = n
            stats.append(
                (
                    np.stack([rec.frames[j].f_bar for j in used]),
                    np.stack([rec.frames[j].b_bar for j in used]),
                )
            )
        return {"features": feats, "normals": normals}, stats


def model_forward(tag, params, inputs):
    if tag == "hemicnn":
        return hemicnn.forward(inputs["images"], params)
    return grouplet.forward(inputs["features"], inputs["normals"], params)


def init_model_params(tcfg: TrainConfig):
    rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, _INIT_STREAM]))
    if tcfg.model == "hemicnn":
        return hemicnn.init_params(rng, tcfg.hemicnn_resolution)
    return grouplet.init_params(rng, tcfg.grouplet_obs)


def make_input_builder(tcfg, records):
    if tcfg.model == "hemicnn":
        return HemiCNNInputs(records, tcfg.hemicnn_images, tcfg.hemicnn_resolution)
    return GroupletInputs(records, tcfg.grouplet_nodes, tcfg.grouplet_obs)


@dataclass
class TrainResult:
    params: dict
    best_params: dict
    norm_stats: NormStats
    standardized_output: bool = True
    log: list = field(default_factory=list)
    best_val_rmse: float = np.inf


def _snapshot(params):
    return {k: np.array(t.data) for k, t in params.items()}


def _validation_rmse(tag, params, builder, records, norm_stats, seed, standardized):
    """Pooled normalized RMSE over a split with seeded input sampling."""
    if not records:
        return np.inf
    errors = []
    targets = targets_for(records, norm_stats.parameterization)
    for i, rec in enumerate(records):
        rng = np.random.default_rng(np.random.SeedSequence([seed, rec.index, _SAMPLE_STREAM]))
        inputs, _ = builder.batch([i], rng)
        out = model_forward(tag, params, inputs).data[0]
        pred = norm_stats.denormalize(out) if standardized else out
        errors.append((pred - targets[i]) / norm_stats.std)
    errors = np.stack(errors)
    return float(np.sqrt(np.mean(errors**2)))


def fit_model(train_records, val_records, tcfg: TrainConfig, lcfg: LossConfig, log_path=None, progress=None):
    """Run the configured minibatch budget and return final and
    best-validation parameters plus the JSONL-able log."""
    with ad.precision(tcfg.dtype):
        params = init_model_params(tcfg)
        norm_stats = compute_norm_stats(train_records, lcfg.parameterization)
        targets = targets_for(train_records, lcfg.parameterization)
        targets_phys = targets_for(train_records, "physical")
        builder = make_input_builder(tcfg, train_records)
        val_builder = make_input_builder(tcfg, val_records) if val_records else None

        kind, _ = OPTIMIZER_DEFAULTS[tcfg.model]
        if kind == "rmsprop":
            optimizer = RMSProp(params, lr=tcfg.learning_rate, decay=tcfg.rmsprop_decay)
        else:
            optimizer = SGDMomentum(params, lr=tcfg.learning_rate, momentum=tcfg.momentum)

        batch_rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, _BATCH_STREAM]))
        sample_rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, _SAMPLE_STREAM]))
        standardized = lcfg.parameterization == "physical"
        if standardized:
            mean_t = norm_stats.mean.astype(ad.get_default_dtype())
            std_t = norm_stats.std.astype(ad.get_default_dtype())
        else:
            mean_t = np.zeros(5, dtype=ad.get_default_dtype())
            std_t = np.ones(5, dtype=ad.get_default_dtype())

        result = TrainResult(
            params=params,
            best_params=_snapshot(params),
            norm_stats=norm_stats,
            standardized_output=standardized,
        )
        log_fh = open(log_path, "w") if log_path else None
        try:
            start = time.perf_counter()
            for step in range(tcfg.n_minibatches):
                indices = batch_rng.integers(0, len(train_records), size=tcfg.batch_size)
                inputs, stats = builder.batch(indices, sample_rng)
                out = model_forward(tcfg.model, params, inputs)
                pred = out * std_t + mean_t  # de-standardize inside the graph
                loss, components = loss_total(
                    pred, targets[indices], stats, lcfg, target_physical=targets_phys[indices]
                )
                loss_value = loss.item()
                if not np.isfinite(loss_value):
                    dump = {
                        "step": step,
                        "scene_indices": [int(i) for i in indices],
                        "seed": tcfg.seed,
                        "components": components,
                    }
                    if log_fh:
                        log_fh.write(json.dumps({"abort": dump}) + "\n")
                    raise NonFiniteLossError(f"non-finite loss at step {step}: {dump}")
                zero_grads(params)
                loss.backward()
                optimizer.step()

                entry = {"step": step, "loss": loss_value, **components}
                if val_builder and (step + 1) % tcfg.val_interval == 0:
                    rmse = _validation_rmse(
                        tcfg.model, params, val_builder, val_records, norm_stats, tcfg.seed, standardized
                    )
                    entry["val_rmse"] = rmse
                    if rmse < result.best_val_rmse:
                        result.best_val_rmse = rmse
                        result.best_params = _snapshot(params)
                result.log.append(entry)
                if log_fh:
                    log_fh.write(json.dumps(entry) + "\n")
                if progress and (step + 1) % 200 == 0:
                    progress(
                        f"step {step + 1}/{tcfg.n_minibatches} loss {loss_value:.4f} "
                        f"({(time.perf_counter() - start):.0f}s)"
                    )
        finally:
            if log_fh:
                log_fh.close()

        if not np.isfinite(result.best_val_rmse):
            result.best_params = _snapshot(params)
        return result


def checkpoint_config(tcfg: TrainConfig, lcfg: LossConfig):
    return {"train": tcfg.to_json(), "loss": lcfg.to_json()}
