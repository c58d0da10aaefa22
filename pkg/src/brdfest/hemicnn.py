"""Hemisphere-image construction and the siamese convolutional regressor.

A voxel's observation directions are rotated so its normal points along
+z, surviving (upper hemisphere) directions are orthographically
projected to the x-y disk, and every in-disk pixel takes the color of
the nearest projected observation. N such images per scene pass through
a shared conv branch, an element-wise max across the set, and a small
head that outputs the 5 BRDF parameters.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptyHemisphereError

DEFAULT_RESOLUTION = 8
DEFAULT_VOXELS = 25  # images per scene
CONV_CHANNELS = 16
FC1_WIDTH = 64
FC2_WIDTH = 32
OUTPUT_DIM = 5


def alignment_rotation(normal):
    """Minimal rotation taking `normal` to +z (identity when aligned).

    The rotation axis is normal x z; for a normal at -z the axis is
    degenerate and a half-turn about x is used instead.
    """
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    z = np.array([0.0, 0.0, 1.0])
    axis = np.cross(n, z)
    s = np.linalg.norm(axis)
    c = n @ z
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        return np.diag([1.0, -1.0, -1.0])
    axis = axis / s
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def pixel_grid(resolution):
    """Pixel-center coordinates on [-1, 1]^2 and the unit-disk mask.
    x follows columns, y follows rows."""
    coords = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
    x, y = np.meshgrid(coords, coords)
    mask = x**2 + y**2 <= 1.0
    return x, y, mask


def build_hemisphere_image(voxel, resolution=DEFAULT_RESOLUTION):
    """Dense (R, R, 3) raster of a voxel's observations plus the in-disk
    mask. Nearest-neighbor fill in planar (x, y) distance, first
    observation winning ties; pixels outside the disk are zero."""
    rot = alignment_rotation(voxel.normal)
    rotated = voxel.view_dirs @ rot.T
    front = rotated[:, 2] > 0
    if not np.any(front):
        raise EmptyHemisphereError("all observations back-facing after alignment")
    sites = rotated[front, :2]
    colors = voxel.colors[front]
    x, y, mask = pixel_grid(resolution)
    px = np.stack([x[mask], y[mask]], axis=1)
    d2 = np.sum((px[:, None, :] - sites[None, :, :]) ** 2, axis=-1)
    nearest = np.argmin(d2, axis=1)  # first index wins ties
    image = np.zeros((resolution, resolution, 3))
    image[mask] = colors[nearest]
    return image, mask


def select_voxels(samples, n=DEFAULT_VOXELS):
    """Representative subset by farthest-point sampling on the normals,
    seeded at the sample with the most observations. If fewer than n
    samples exist, the selected order is cycled to length n."""
    if not samples:
        raise EmptyHemisphereError("no voxel samples to select from")
    normals = np.stack([s.normal for s in samples])
    counts = np.array([s.n_observations for s in samples])
    order = [int(np.argmax(counts))]
    min_d = np.sum((normals - normals[order[0]]) ** 2, axis=1)
    while len(order) < min(n, len(samples)):
        nxt = int(np.argmax(min_d))
        order.append(nxt)
        min_d = np.minimum(min_d, np.sum((normals - normals[nxt]) ** 2, axis=1))
    return [samples[order[i % len(order)]] for i in range(n)]


def init_params(rng, resolution=DEFAULT_RESOLUTION):
    """Glorot-uniform weights, zero biases, in a fixed insertion order."""
    if resolution % 2:
        raise ValueError("hemisphere image resolution must be even (2x2 pooling)")
    pooled = (resolution // 2) ** 2 * CONV_CHANNELS

    def glorot(shape, fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return ad.parameter(rng.uniform(-lim, lim, size=shape))

    params = {
        "conv1_w": glorot((3, 3, 3, CONV_CHANNELS), 9 * 3, 9 * CONV_CHANNELS),
        "conv1_b": ad.parameter(np.zeros(CONV_CHANNELS)),
        "conv2_w": glorot((3, 3, CONV_CHANNELS, CONV_CHANNELS), 9 * CONV_CHANNELS, 9 * CONV_CHANNELS),
        "conv2_b": ad.parameter(np.zeros(CONV_CHANNELS)),
        "fc1_w": glorot((pooled, FC1_WIDTH), pooled, FC1_WIDTH),
        "fc1_b": ad.parameter(np.zeros(FC1_WIDTH)),
        "fc2_w": glorot((FC1_WIDTH, FC2_WIDTH), FC1_WIDTH, FC2_WIDTH),
        "fc2_b": ad.parameter(np.zeros(FC2_WIDTH)),
        "out_w": glorot((FC2_WIDTH, OUTPUT_DIM), FC2_WIDTH, OUTPUT_DIM),
        "out_b": ad.parameter(np.zeros(OUTPUT_DIM)),
    }
    return params


def parameter_count(resolution=DEFAULT_RESOLUTION):
    pooled = (resolution // 2) ** 2 * CONV_CHANNELS
    return (
        (9 * 3 + 1) * CONV_CHANNELS
        + (9 * CONV_CHANNELS + 1) * CONV_CHANNELS
        + (pooled + 1) * FC1_WIDTH
        + (FC1_WIDTH + 1) * FC2_WIDTH
        + (FC2_WIDTH + 1) * OUTPUT_DIM
    )


def forward(images, params):
    """(B, N, R, R, 3) images -> (B, 5) predictions.

    The shared branch runs per image (bitwise independent of batch
    composition), so the prediction is exactly invariant to permuting or
    duplicating the N images of a scene.
    """
    if not isinstance(images, Tensor):
        images = Tensor(images)
    b, n, r = images.shape[0], images.shape[1], images.shape[2]
    x = images.reshape((b * n, r, r, 3))
    x = ad.relu(ad.conv3x3(x, params["conv1_w"], params["conv1_b"]))
    x = ad.relu(ad.conv3x3(x, params["conv2_w"], params["conv2_b"]))
    x = ad.maxpool2x2(x)
    x = x.reshape((b * n, (r // 2) * (r // 2) * CONV_CHANNELS))
    x = ad.linear(x, params["fc1_w"], params["fc1_b"], exact_rows=True)
    x = x.reshape((b, n, FC1_WIDTH))
    pooled = ad.setmax(x, axis=1)
    h = ad.tanh(ad.linear(pooled, params["fc2_w"], params["fc2_b"]))
    return ad.linear(h, params["out_w"], params["out_b"])


def scene_images(voxels, n_images=DEFAULT_VOXELS, resolution=DEFAULT_RESOLUTION):
    """Stacked (N, R, R, 3) hemisphere images for a scene's voxels."""
    chosen = select_voxels(voxels, n_images)
    return np.stack([build_hemisphere_image(v, resolution)[0] for v in chosen])
