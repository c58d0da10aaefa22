"""Gradient-check battery: every differentiable op, both full networks,
and the three losses (with the image-statistics term), verified against
64-bit central differences."""

import numpy as np

from . import autodiff as ad
from . import grouplet, hemicnn
from .autodiff import Tensor, grad_check, parameter
from .brdf import physical_to_perceptual, random_ward
from .losses import LossConfig, loss_total

SMOOTH_TOL = 1e-6
KINKED_TOL = 1e-3


def _op_checks(rng):
    checks = []

    x = parameter(rng.normal(size=(5, 5)))
    w = parameter(rng.normal(size=(5, 7)))
    b = parameter(rng.normal(size=7))
    checks.append(
        ("fc", SMOOTH_TOL, lambda: grad_check(
            lambda x, w, b: (ad.linear(x, w, b) ** 2.0).sum(), [x, w, b], h=1e-5))
    )

    xc = parameter(rng.normal(size=(2, 4, 4, 3)))
    fc = parameter(rng.normal(size=(3, 3, 3, 2)) * 0.5)
    bc = parameter(rng.normal(size=2))
    checks.append(
        ("conv3x3", SMOOTH_TOL, lambda: grad_check(
            lambda x, f, b: (ad.conv3x3(x, f, b) ** 2.0).sum(), [xc, fc, bc], h=1e-5))
    )

    # pooling and relu have kinks; inputs keep a margin from ties/zero
    xp = parameter(rng.normal(size=(2, 4, 4, 2)) + np.arange(32).reshape(2, 4, 4, 1) * 0.1)
    checks.append(
        ("maxpool2x2", KINKED_TOL, lambda: grad_check(
            lambda x: (ad.maxpool2x2(x) ** 2.0).sum(), [xp], h=1e-6))
    )
    xr = parameter(np.sign(rng.normal(size=24)) * rng.uniform(0.5, 2.0, 24))
    checks.append(
        ("relu", KINKED_TOL, lambda: grad_check(
            lambda x: (ad.relu(x) * ad.relu(x)).sum(), [xr], h=1e-6))
    )
    xt = parameter(rng.normal(size=16))
    checks.append(
        ("tanh", 1e-8, lambda: grad_check(lambda x: ad.tanh(x).sum(), [xt], h=1e-6))
    )
    xs = parameter(rng.normal(size=(6, 5)) + np.arange(30).reshape(6, 5) * 0.05)
    checks.append(
        ("setmax", KINKED_TOL, lambda: grad_check(
            lambda x: (ad.setmax(x, axis=0) ** 2.0).sum(), [xs], h=1e-6))
    )
    xm = parameter(rng.normal(size=(6, 5)))
    checks.append(
        ("moment_pool", SMOOTH_TOL, lambda: grad_check(
            lambda x: (ad.moment_pool(x, axis=0) ** 2.0).sum(), [xm], h=1e-5))
    )
    xe = parameter(rng.uniform(0.5, 1.5, size=(3, 4)))
    checks.append(
        ("scalar_ops", SMOOTH_TOL, lambda: grad_check(
            lambda x: (ad.texp(x * 0.3) / (x + 1.0) + ad.tsqrt(x) + ad.tcbrt(x)).sum(), [xe], h=1e-6))
    )
    return checks


def _network_checks(rng):
    checks = []
    stats = [
        (rng.uniform(0.2, 0.6, (2, 3)), rng.uniform(0.4, 0.8, (2, 3)))
        for _ in range(2)
    ]
    targets = np.stack([random_ward(rng).to_vector() for _ in range(2)])

    hp = hemicnn.init_params(rng)
    images = Tensor(rng.uniform(size=(2, 2, 8, 8, 3)))
    h_names = list(hp)
    h_tensors = [hp[k] for k in h_names]

    def f_hemi(*tensors):
        p = dict(zip(h_names, tensors))
        pred = hemicnn.forward(images, p)
        loss, _ = loss_total(pred, targets, stats, LossConfig("rmse1", lambda_ec=0.01))
        return loss

    # h = 1e-6: small enough that pooling-tie flip windows are negligible
    checks.append(
        ("hemicnn_full_rmse1_ec", KINKED_TOL,
         lambda: grad_check(f_hemi, h_tensors, h=1e-6, max_coords=25, seed=1))
    )

    gp = grouplet.init_params(rng)
    feats = Tensor(rng.uniform(size=(2, 2, 10, 12)))
    normals = Tensor(rng.normal(size=(2, 2, 3)))
    g_names = list(gp)
    g_tensors = [gp[k] for k in g_names]

    def f_grp(*tensors):
        p = dict(zip(g_names, tensors))
        pred = grouplet.forward(feats, normals, p)
        loss, _ = loss_total(pred, targets, stats, LossConfig("rmse1", lambda_ec=0.01))
        return loss

    checks.append(
        ("grouplet_full_rmse1_ec", KINKED_TOL,
         lambda: grad_check(f_grp, g_tensors, h=1e-5, max_coords=25, seed=2))
    )

    # the three losses w.r.t. the prediction vector, regularizer included
    pred_phys = parameter(np.stack([random_ward(rng).to_vector() for _ in range(2)]))
    for metric in ("rmse1", "cuberoot"):
        cfg = LossConfig(metric, lambda_ec=0.01)
        checks.append(
            (f"loss_{metric}_ec", KINKED_TOL,
             lambda cfg=cfg: grad_check(
                 lambda p: loss_total(p, targets, stats, cfg)[0], [pred_phys], h=1e-6))
        )
    pred_perc = parameter(
        physical_to_perceptual(np.stack([random_ward(rng).to_vector() for _ in range(2)]))
    )
    targets_perc = physical_to_perceptual(targets)
    cfg2 = LossConfig("rmse2", lambda_ec=0.01)
    checks.append(
        ("loss_rmse2_ec", KINKED_TOL,
         lambda: grad_check(
             lambda p: loss_total(p, targets_perc, stats, cfg2)[0], [pred_perc], h=1e-6))
    )
    return checks


def run_gradient_checks(seed=0):
    """Run the whole battery in float64; returns one row per check."""
    rng = np.random.default_rng(seed)
    rows = []
    with ad.precision("float64"):
        for name, tol, fn in _op_checks(rng) + _network_checks(rng):
            error = float(fn())
            rows.append({"name": name, "max_rel_error": error, "tolerance": tol, "passed": error < tol})
    return rows
