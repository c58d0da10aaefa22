"""Training losses: the three parameter-space distances plus the
image-statistics regularizer that resolves scale and color-constancy
ambiguity.

Predictions flow through as autodiff tensors in the active
parameterization (physical for rmse1/cuberoot, perceptual for rmse2);
targets and per-view statistics are constants. When the network predicts
perceptual parameters, the regularizer converts them to physical inside
the graph, so its gradient reaches the network either way.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .brdf import (
    CUBEROOT_EPS,
    LOBE_GRID_EVAL,
    LOBE_GRID_TRAIN,
    METRICS,
    SPECULAR_COS_CLAMP,
    lobe_quadrature,
    ward_specular_scalar,
)
from .colorspace import GAMMA, WHITE_XYZ, XYZ_TO_RGB, _LAB_DELTA
from .errors import ConfigurationError

PHYSICAL_METRICS = ("rmse1", "cuberoot")
ALPHA_CLAMP_RANGE = (0.03, 1.0)


@dataclass
class LossConfig:
    metric: str = "rmse1"
    lambda_ec: float = 0.01
    lambda_g: float = 1.0
    parameterization: str = ""
    cuberoot_train_grid: tuple = LOBE_GRID_TRAIN
    cuberoot_eval_grid: tuple = field(default=LOBE_GRID_EVAL)

    def __post_init__(self):
        self.metric = self.metric.lower()
        if self.metric not in METRICS:
            raise ConfigurationError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        if self.lambda_ec < 0:
            raise ConfigurationError("lambda_ec must be >= 0")
        expected = "perceptual" if self.metric == "rmse2" else "physical"
        if not self.parameterization:
            self.parameterization = expected
        if self.parameterization != expected:
            raise ConfigurationError(
                f"metric {self.metric} requires the {expected} parameterization, got {self.parameterization}"
            )

    def to_json(self):
        return {
            "metric": self.metric,
            "lambda_ec": self.lambda_ec,
            "lambda_g": self.lambda_g,
            "parameterization": self.parameterization,
            "cuberoot_train_grid": list(self.cuberoot_train_grid),
            "cuberoot_eval_grid": list(self.cuberoot_eval_grid),
        }

    @classmethod
    def from_json(cls, obj):
        data = dict(obj)
        for key in ("cuberoot_train_grid", "cuberoot_eval_grid"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def _lab_f_inv_graph(t):
    """Piecewise CIE f-inverse on a Tensor; the branch mask is captured at
    forward time (subgradient at the joint is the cubic branch)."""
    mask = (t.data > _LAB_DELTA).astype(t.data.dtype)
    cubic = t**3.0
    linear = (t - 4.0 / 29.0) * (3.0 * _LAB_DELTA**2)
    return cubic * mask + linear * (1.0 - mask)


def perceptual_to_physical_graph(pred):
    """(B, 5) perceptual Tensor -> (rho_d (B,3), rho_s (B,1), alpha (B,1))
    inside the graph. No clamping here: inference-time clamps never enter
    the loss."""
    L = pred[:, 0:1]
    a = pred[:, 1:2]
    b = pred[:, 2:3]
    c = pred[:, 3:4]
    d = pred[:, 4:5]
    fy = (L + 16.0) * (1.0 / 116.0)
    fx = fy + a * (1.0 / 500.0)
    fz = fy - b * (1.0 / 200.0)
    xyz = ad.concat(
        [
            _lab_f_inv_graph(fx) * WHITE_XYZ[0],
            _lab_f_inv_graph(fy) * WHITE_XYZ[1],
            _lab_f_inv_graph(fz) * WHITE_XYZ[2],
        ],
        axis=1,
    )
    rho_d = ad.matmul(xyz, Tensor(XYZ_TO_RGB.T))
    # Rec.709 luminance of rho_d is exactly the Y coordinate.
    half = xyz[:, 1:2] * 0.5
    rho_s = (c + ad.tcbrt(half)) ** 3.0 - half
    alpha = 1.0 - d
    return rho_d, rho_s, alpha


def physical_parts(pred, parameterization):
    """Split a (B, 5) prediction into (rho_d, rho_s, alpha) tensors,
    converting from perceptual coordinates when needed."""
    if parameterization == "physical":
        return pred[:, 0:3], pred[:, 3:4], pred[:, 4:5]
    return perceptual_to_physical_graph(pred)


def loss_ec(rho_d, rho_s, stats_list):
    """Image-statistics regularizer, summed over the views used in the
    forward pass and averaged over the batch.

    rho_d (B,3) and rho_s (B,1) are graph tensors; stats_list holds one
    (f_bars (k,3), b_bars (k,3)) pair per scene. Per scene the term is
    sum_i || (rho_d + rho_s) * b_bar_i^gamma - f_bar_i^gamma ||^2.
    """
    scale = rho_d + rho_s  # rho_s broadcasts across channels
    total = None
    batch = scale.shape[0]
    for row, (f_bars, b_bars) in enumerate(stats_list):
        term = ((scale[row : row + 1, :] * (b_bars**GAMMA) - f_bars**GAMMA) ** 2.0).sum()
        total = term if total is None else total + term
    return total * (1.0 / batch)


def _rmse1_term(pred, targets):
    diff = pred - targets
    per_scene = (diff[:, 0:3] ** 2.0).sum(axis=1) + (diff[:, 3] ** 2.0) + (diff[:, 4] ** 2.0)
    return per_scene.mean()


def _rmse2_term(pred, targets, lambda_g):
    diff = pred - targets
    lab = (diff[:, 0:3] ** 2.0).sum(axis=1)
    gloss = (diff[:, 3] ** 2.0) + (diff[:, 4] ** 2.0)
    return (lab + gloss * lambda_g).mean()


def _cuberoot_term(rho_d, rho_s, alpha, target_physical, grid):
    """Differentiable cube-root distance on the lobe-adapted quadrature,
    batched over scenes; targets are constants."""
    mu_i, mu_o, tan2, weight = lobe_quadrature(*grid)
    dtype = ad.get_default_dtype()
    mu_i = mu_i.astype(dtype)
    tan2 = tan2.astype(dtype)
    weight = weight.astype(dtype)
    root_c = (4.0 * np.pi * np.sqrt(np.maximum(mu_i, SPECULAR_COS_CLAMP) * np.maximum(mu_o, SPECULAR_COS_CLAMP))).astype(dtype)

    s_target = np.stack(
        [
            ward_specular_scalar(mu_i, mu_o, tan2, t[3], t[4])
            for t in np.asarray(target_physical, dtype=np.float64)
        ]
    ).astype(dtype)

    alpha2 = alpha**2.0  # (B,1)
    k_pred = ad.texp(-1.0 * ad.div(Tensor(tan2), alpha2)) / (alpha2 * Tensor(root_c))
    s = Tensor(s_target) - rho_s * k_pred  # (B, K)

    d = (Tensor(np.asarray(target_physical)[:, 0:3].astype(dtype)) - rho_d) * (1.0 / np.pi)
    d_norm2 = (d**2.0).sum(axis=1, keepdims=True)
    d_sum = d.sum(axis=1, keepdims=True)
    d_norm = ad.tsqrt(d_norm2, eps=1e-18)
    # the quadratic is >= 0 exactly; 1e-12 absorbs cancellation roundoff.
    # Both square roots share the epsilon so the residual is exactly zero
    # wherever the specular parts cancel.
    residual = ad.tsqrt(d_norm2 + (d_sum * 2.0) * s + s**2.0 * 3.0, eps=1e-12) - ad.tsqrt(
        d_norm2, eps=1e-12
    )
    integral = d_norm * (2.0 * np.pi**2) + (residual * weight).sum(axis=1, keepdims=True)
    return ad.tcbrt(integral + CUBEROOT_EPS).mean()


def loss_total(pred, targets, stats_list, cfg: LossConfig, target_physical=None, train_grid=True):
    """J = E_d + lambda * E_c over a batch (means over scenes).

    pred: (B, 5) Tensor in cfg.parameterization; targets: (B, 5) constants
    in the same space; target_physical: (B, 5) physical-space constants
    (needed by the cuberoot metric). Returns (loss Tensor, components).
    """
    targets = np.asarray(targets, dtype=ad.get_default_dtype())
    if cfg.metric == "rmse1":
        e_d = _rmse1_term(pred, Tensor(targets))
    elif cfg.metric == "rmse2":
        e_d = _rmse2_term(pred, Tensor(targets), cfg.lambda_g)
    else:
        if target_physical is None:
            target_physical = targets
        rho_d, rho_s, alpha = physical_parts(pred, cfg.parameterization)
        grid = cfg.cuberoot_train_grid if train_grid else cfg.cuberoot_eval_grid
        e_d = _cuberoot_term(rho_d, rho_s, alpha, target_physical, grid)

    components = {}
    if cfg.lambda_ec > 0.0:
        rho_d, rho_s, _ = physical_parts(pred, cfg.parameterization)
        e_c = loss_ec(rho_d, rho_s, stats_list)
        loss = e_d + e_c * cfg.lambda_ec
        components["e_c"] = float(e_c.data)
    else:
        loss = e_d
        components["e_c"] = 0.0
    components["e_d"] = float(e_d.data)
    return loss, components


def clamp_physical(vectors):
    """Inference-time clamp: reflectances to [0, 1], roughness to the
    generator's range. Never applied inside the loss graph."""
    vectors = np.array(vectors, dtype=np.float64)
    vectors[..., 0:4] = np.clip(vectors[..., 0:4], 0.0, 1.0)
    vectors[..., 4] = np.clip(vectors[..., 4], *ALPHA_CLAMP_RANGE)
    return vectors
