"""Sampling-based set regressor over raw voxel observations.

Each node consumes M observations of one voxel, ordered by the cosine
distance between the observation direction and the voxel normal. Every
observation is a 12-vector (color, view direction, per-view foreground
and background means) passed through a shared branch MLP; the M branch
outputs concatenate with the voxel normal into the node MLP. Node
outputs pool by mean and variance, so any node count works at inference,
and a small regressor head maps the pooled vector to the 5 parameters.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

OBS_FEATURES = 12
BRANCH_WIDTHS = (128, 128, 64)
NODE_WIDTHS = (256, 128)
REGRESSOR_WIDTHS = (128, 128)
OUTPUT_DIM = 5
DEFAULT_OBS_PER_NODE = 10  # M
FAST_NODES = 20
SLOW_NODES = 354


def node_input_dim(m=DEFAULT_OBS_PER_NODE):
    return m * BRANCH_WIDTHS[-1] + 3


def order_observations(voxel):
    """Indices sorting observations by ascending cosine distance
    1 - o.n, stable tie-break by frame id."""
    dist = 1.0 - voxel.view_dirs @ voxel.normal
    return np.lexsort((voxel.frame_ids, dist))


def sample_node_inputs(voxel, m, rng):
    """Draw M observation indices (without replacement when the voxel has
    at least M, otherwise with), then order them."""
    n = voxel.n_observations
    if n >= m:
        picked = rng.choice(n, size=m, replace=False)
    else:
        picked = rng.choice(n, size=m, replace=True)
    dist = 1.0 - voxel.view_dirs[picked] @ voxel.normal
    order = np.lexsort((voxel.frame_ids[picked], dist))
    return picked[order]


def node_features(voxel, indices):
    """(M, 12) branch inputs for the chosen observations."""
    return np.concatenate(
        [
            voxel.colors[indices],
            voxel.view_dirs[indices],
            voxel.f_bars[indices],
            voxel.b_bars[indices],
        ],
        axis=1,
    )


def init_params(rng, m=DEFAULT_OBS_PER_NODE):
    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return ad.parameter(rng.uniform(-lim, lim, size=(fan_in, fan_out)))

    params = {}
    widths = (OBS_FEATURES,) + BRANCH_WIDTHS
    for i, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
        params[f"branch{i}_w"] = glorot(fi, fo)
        params[f"branch{i}_b"] = ad.parameter(np.zeros(fo))
    widths = (node_input_dim(m),) + NODE_WIDTHS
    for i, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
        params[f"node{i}_w"] = glorot(fi, fo)
        params[f"node{i}_b"] = ad.parameter(np.zeros(fo))
    widths = (2 * NODE_WIDTHS[-1],) + REGRESSOR_WIDTHS + (OUTPUT_DIM,)
    for i, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
        params[f"reg{i}_w"] = glorot(fi, fo)
        params[f"reg{i}_b"] = ad.parameter(np.zeros(fo))
    return params


def parameter_count(m=DEFAULT_OBS_PER_NODE):
    total = 0
    widths = (OBS_FEATURES,) + BRANCH_WIDTHS
    total += sum((fi + 1) * fo for fi, fo in zip(widths[:-1], widths[1:]))
    widths = (node_input_dim(m),) + NODE_WIDTHS
    total += sum((fi + 1) * fo for fi, fo in zip(widths[:-1], widths[1:]))
    widths = (2 * NODE_WIDTHS[-1],) + REGRESSOR_WIDTHS + (OUTPUT_DIM,)
    total += sum((fi + 1) * fo for fi, fo in zip(widths[:-1], widths[1:]))
    return total


def node_forward(features, normal, params):
    """One node: (M, 12) ordered observations + normal -> (1, 128) vector."""
    features = np.asarray(features)
    m = features.shape[0]
    return forward(
        features.reshape(1, 1, m, OBS_FEATURES),
        np.asarray(normal).reshape(1, 1, 3),
        params,
        _nodes_only=True,
    )


def forward(features, normals, params, _nodes_only=False):
    """(B, N, M, 12) observation features + (B, N, 3) normals -> (B, 5).

    All hidden activations are tanh; the final output layer is linear.
    Moment pooling over the N nodes makes the prediction independent of
    node order and count.
    """
    if not isinstance(features, Tensor):
        features = Tensor(features)
    if not isinstance(normals, Tensor):
        normals = Tensor(np.asarray(normals))
    b, n, m = features.shape[0], features.shape[1], features.shape[2]
    x = features.reshape((b * n * m, OBS_FEATURES))
    for i in range(len(BRANCH_WIDTHS)):
        x = ad.tanh(ad.linear(x, params[f"branch{i}_w"], params[f"branch{i}_b"]))
    x = x.reshape((b * n, m * BRANCH_WIDTHS[-1]))
    x = ad.concat([x, normals.reshape((b * n, 3))], axis=1)
    for i in range(len(NODE_WIDTHS)):
        x = ad.tanh(ad.linear(x, params[f"node{i}_w"], params[f"node{i}_b"]))
    if _nodes_only:
        return x
    x = x.reshape((b, n, NODE_WIDTHS[-1]))
    pooled = ad.moment_pool(x, axis=1)
    for i in range(len(REGRESSOR_WIDTHS)):
        pooled = ad.tanh(ad.linear(pooled, params[f"reg{i}_w"], params[f"reg{i}_b"]))
    return ad.linear(pooled, params[f"reg{len(REGRESSOR_WIDTHS)}_w"], params[f"reg{len(REGRESSOR_WIDTHS)}_b"])


def scene_node_batch(voxels, n_nodes, m, rng):
    """Sample N nodes (voxels) and M ordered observations each; returns
    feature (N, M, 12) and normal (N, 3) arrays plus the frame ids used."""
    n_avail = len(voxels)
    if n_avail >= n_nodes:
        chosen = rng.choice(n_avail, size=n_nodes, replace=False)
    else:
        chosen = rng.choice(n_avail, size=n_nodes, replace=True)
    feats = np.empty((n_nodes, m, OBS_FEATURES))
    normals = np.empty((n_nodes, 3))
    used_frames = set()
    for row, vi in enumerate(chosen):
        voxel = voxels[vi]
        idx = sample_node_inputs(voxel, m, rng)
        feats[row] = node_features(voxel, idx)
        normals[row] = voxel.normal
        used_frames.update(voxel.frame_ids[idx].tolist())
    return feats, normals, sorted(used_frames)
