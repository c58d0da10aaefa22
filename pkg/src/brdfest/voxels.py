"""Surface samples and their per-view observations.

Stands in for TSDF fusion: geometry and poses are exact here, so voxels
are area-uniform surface samples and visibility is an exact ray test.
The observation schema (color, view direction, frame id, per-view
foreground/background statistics) is what the networks consume.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSceneError

MIN_FACING = 1e-3  # required view-normal cosine for an observation


@dataclass
class VoxelSample:
    position: np.ndarray
    normal: np.ndarray
    colors: np.ndarray  # (m, 3) LDR in [0, 1]
    view_dirs: np.ndarray  # (m, 3) unit vectors toward the cameras
    frame_ids: np.ndarray  # (m,) int
    f_bars: np.ndarray  # (m, 3) per-observation view statistics
    b_bars: np.ndarray  # (m, 3)

    @property
    def n_observations(self):
        return len(self.frame_ids)

    def restricted_to_frames(self, n_frames):
        """Keep only observations from the first n_frames views; returns
        None when none survive."""
        keep = self.frame_ids < n_frames
        if not np.any(keep):
            return None
        return VoxelSample(
            position=self.position,
            normal=self.normal,
            colors=self.colors[keep],
            view_dirs=self.view_dirs[keep],
            frame_ids=self.frame_ids[keep],
            f_bars=self.f_bars[keep],
            b_bars=self.b_bars[keep],
        )


def bilinear_sample(image, u, v):
    """Bilinear lookup at pixel coordinates (u right, v down), defined on
    pixel centers; callers guarantee 0.5 <= u <= W-0.5 and likewise v."""
    h, w = image.shape[:2]
    x = np.clip(u - 0.5, 0.0, w - 1.0)
    y = np.clip(v - 0.5, 0.0, h - 1.0)
    x0 = np.clip(np.floor(x).astype(int), 0, w - 2)
    y0 = np.clip(np.floor(y).astype(int), 0, h - 2)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    top = image[y0, x0] * (1 - fx) + image[y0, x0 + 1] * fx
    bottom = image[y0 + 1, x0] * (1 - fx) + image[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bottom * fy


def extract_voxel_samples(scene, frames, n_voxels, seed):
    """Draw n_voxels area-uniform surface samples and collect one
    observation per (sample, frame) that is front-facing, unoccluded and
    projects inside the image. Samples with zero observations are
    dropped; an empty result raises DegenerateSceneError.
    """
    rng = np.random.default_rng(seed)  # int seed, SeedSequence or Generator
    points, normals = scene.shape.sample_surface(n_voxels, rng)

    per_voxel = [[] for _ in range(n_voxels)]
    for frame_id, frame in enumerate(frames):
        cam = frame.camera
        to_cam = cam.position[None, :] - points
        dist = np.linalg.norm(to_cam, axis=-1)
        view_dir = to_cam / dist[:, None]
        facing = np.einsum("ij,ij->i", view_dir, normals) > MIN_FACING
        u, v, in_front = cam.project(points)
        inside = (
            in_front
            & (u >= 0.5)
            & (u <= cam.width - 0.5)
            & (v >= 0.5)
            & (v <= cam.height - 0.5)
        )
        candidate = facing & inside
        if not np.any(candidate):
            continue
        idx = np.where(candidate)[0]
        visible = ~scene.shape.occluded(points[idx], cam.position)
        idx = idx[visible]
        if idx.size == 0:
            continue
        colors = bilinear_sample(frame.ldr, u[idx], v[idx])
        for row, k in enumerate(idx):
            per_voxel[k].append((colors[row], view_dir[k], frame_id, frame.f_bar, frame.b_bar))

    samples = []
    for k, obs in enumerate(per_voxel):
        if not obs:
            continue
        samples.append(
            VoxelSample(
                position=points[k],
                normal=normals[k],
                colors=np.array([o[0] for o in obs]),
                view_dirs=np.array([o[1] for o in obs]),
                frame_ids=np.array([o[2] for o in obs], dtype=np.int64),
                f_bars=np.array([o[3] for o in obs]),
                b_bars=np.array([o[4] for o in obs]),
            )
        )
    if not samples:
        raise DegenerateSceneError("every surface sample ended up with zero observations")
    return samples
