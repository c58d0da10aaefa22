"""Desk-scale synthetic dataset generation, storage and loading.

A dataset is a directory:

    <root>/manifest.json                   scene descriptors, split, seed
    <root>/scenes/<id>/frames.f32          per frame: R (9), C (3), f_bar (3), b_bar (3)
    <root>/scenes/<id>/voxels.f32          per voxel: pos (3), normal (3),
                                           then per observation: color (3),
                                           view_dir (3), frame_id (1)
    <root>/scenes/<id>/meta.json           array lengths and layout

All float arrays are little-endian 32-bit. Every random draw is derived
from (seed, scene index), so regeneration is byte-identical and scenes
could be generated in parallel without changing the output.
"""

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .brdf import WardBRDF, random_ward
from .errors import ConfigurationError, DegenerateSceneError
from .geometry import Box, Sphere, Superellipsoid
from .imageio import write_ppm
from .render import render_view
from .scene import Camera, Environment, Scene, orbit_cameras
from .voxels import VoxelSample, extract_voxel_samples

FRAME_RECORD_FLOATS = 18
VOXEL_HEADER_FLOATS = 6
OBS_RECORD_FLOATS = 7
_SPLIT_STREAM_KEY = 982451653  # marker distinguishing the split stream


@dataclass
class DatasetConfig:
    n_scenes: int = 300
    n_views: int = 40
    n_voxels: int = 400
    resolution: int = 64
    fov_deg: float = 50.0
    val_fraction: float = 0.08
    seed: int = 0
    rho_s_range: tuple = (0.0, 0.4)
    alpha_range: tuple = (0.03, 1.0)
    shape_kinds: tuple = ("sphere", "box", "superellipsoid")
    shape_scale_range: tuple = (0.45, 0.8)
    ambient_range: tuple = (0.25, 0.45)
    ambient_chroma_range: tuple = (0.7, 1.0)
    max_lights: int = 3
    light_intensity_range: tuple = (0.04, 0.22)
    orbit_radius_range: tuple = (1.7, 2.3)
    elevation_range_deg: tuple = (-35.0, 60.0)
    brightness_scale_range: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.n_scenes < 1 or self.n_views < 1 or self.n_voxels < 1:
            raise ConfigurationError("scene/view/voxel counts must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigurationError("val_fraction must be in [0, 1)")
        if self.alpha_range[0] < 0.005:
            raise ConfigurationError("alpha floor too small for stable rendering")

    def to_json(self):
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    @classmethod
    def from_json(cls, obj):
        data = dict(obj)
        for key, value in data.items():
            if isinstance(value, list):
                data[key] = tuple(value)
        return cls(**data)


def sample_shape(cfg, rng):
    kind = cfg.shape_kinds[rng.integers(0, len(cfg.shape_kinds))]
    scale = rng.uniform(*cfg.shape_scale_range)
    if kind == "sphere":
        return Sphere(radius=scale)
    if kind == "box":
        ratios = rng.uniform(0.5, 1.0, size=3)
        half = scale * ratios / np.max(ratios) / np.sqrt(3.0)
        return Box(half_extents=half * np.sqrt(3.0) * 0.75)
    if kind == "superellipsoid":
        ratios = rng.uniform(0.6, 1.0, size=3)
        lo, hi = Superellipsoid.EXPONENT_RANGE
        return Superellipsoid(
            half_axes=scale * ratios / np.max(ratios) * 0.85,
            e_ns=float(rng.uniform(lo, hi)),
            e_ew=float(rng.uniform(lo, hi)),
        )
    raise ConfigurationError(f"unknown shape kind {kind!r}")


def sample_environment(cfg, rng):
    brightness = rng.uniform(*cfg.brightness_scale_range)
    ambient = rng.uniform(*cfg.ambient_range) * rng.uniform(*cfg.ambient_chroma_range, size=3)
    n_lights = int(rng.integers(0, cfg.max_lights + 1))
    lights = []
    for _ in range(n_lights):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        radiance = rng.uniform(*cfg.light_intensity_range) * rng.uniform(0.6, 1.0, size=3)
        lights.append((direction, radiance * brightness))
    return Environment(ambient=ambient * brightness, lights=lights)


def build_scene(cfg, index):
    """Scene and cameras for one index; all draws derive from
    (cfg.seed, index) so generation order does not matter."""
    root = np.random.SeedSequence([cfg.seed, index])
    mat_ss, cam_ss, voxel_ss = root.spawn(3)
    rng = np.random.default_rng(mat_ss)
    shape = sample_shape(cfg, rng)
    material = random_ward(rng, rho_s_range=cfg.rho_s_range, alpha_range=cfg.alpha_range)
    environment = sample_environment(cfg, rng)
    scene = Scene(shape=shape, material=material, environment=environment)
    cameras = orbit_cameras(
        np.random.default_rng(cam_ss),
        cfg.n_views,
        cfg.orbit_radius_range,
        cfg.elevation_range_deg,
        cfg.resolution,
        cfg.resolution,
        cfg.fov_deg,
    )
    return scene, cameras, voxel_ss


@dataclass
class FrameStats:
    rotation: np.ndarray
    position: np.ndarray
    f_bar: np.ndarray
    b_bar: np.ndarray


@dataclass
class SceneRecord:
    """One scene as consumed by training/evaluation: ground truth
    material, per-view statistics, and the voxel observation sets."""

    scene_id: str
    index: int
    split: str
    material: WardBRDF
    scene_json: dict
    frames: list
    voxels: list

    @property
    def n_frames(self):
        return len(self.frames)


@dataclass
class Dataset:
    root: Path
    manifest: dict
    records: list = field(default_factory=list)

    def split_records(self, split):
        return [r for r in self.records if r.split == split]

    @property
    def config(self):
        return DatasetConfig.from_json(self.manifest["config"])


def _scene_id(index):
    return f"scene_{index:04d}"


def split_assignment(cfg):
    """floor rule: n_val = floor(val_fraction * n_scenes); the first n_val
    of a seeded permutation are validation, the remainder train."""
    n_val = int(np.floor(cfg.val_fraction * cfg.n_scenes))
    perm = np.random.default_rng(np.random.SeedSequence([cfg.seed, _SPLIT_STREAM_KEY])).permutation(
        cfg.n_scenes
    )
    splits = np.full(cfg.n_scenes, "train", dtype=object)
    splits[perm[:n_val]] = "val"
    return splits.tolist()


def _frames_to_array(frames):
    rows = []
    for fr in frames:
        rows.append(
            np.concatenate(
                [fr.camera.rotation.ravel(), fr.camera.position, fr.f_bar, fr.b_bar]
            )
        )
    return np.stack(rows)


def _voxels_to_array(voxels):
    chunks = []
    counts = []
    for v in voxels:
        counts.append(v.n_observations)
        obs = np.concatenate(
            [v.colors, v.view_dirs, v.frame_ids[:, None].astype(np.float64)], axis=1
        ).ravel()
        chunks.append(np.concatenate([v.position, v.normal, obs]))
    return np.concatenate(chunks), counts


def generate_scene_payload(cfg, index):
    scene, cameras, voxel_ss = build_scene(cfg, index)
    frames = [render_view(scene, cam) for cam in cameras]
    voxels = extract_voxel_samples(scene, frames, cfg.n_voxels, np.random.default_rng(voxel_ss))
    return scene, frames, voxels


def generate_dataset(cfg: DatasetConfig, out_dir, dump_images=False, log=None) -> Dataset:
    """Render every scene, extract voxel observations, and write the
    dataset directory. Deterministic: the same config writes identical
    bytes."""
    out = Path(out_dir)
    scenes_dir = out / "scenes"
    scenes_dir.mkdir(parents=True, exist_ok=True)
    splits = split_assignment(cfg)

    manifest_scenes = []
    records = []
    for index in range(cfg.n_scenes):
        scene, frames, voxels = generate_scene_payload(cfg, index)
        scene_id = _scene_id(index)
        sdir = scenes_dir / scene_id
        sdir.mkdir(parents=True, exist_ok=True)

        frame_array = _frames_to_array(frames)
        voxel_array, obs_counts = _voxels_to_array(voxels)
        frame_array.astype("<f4").tofile(sdir / "frames.f32")
        voxel_array.astype("<f4").tofile(sdir / "voxels.f32")
        meta = {
            "scene_id": scene_id,
            "n_frames": len(frames),
            "n_voxels": len(voxels),
            "obs_counts": obs_counts,
            "frame_record_floats": FRAME_RECORD_FLOATS,
            "voxel_header_floats": VOXEL_HEADER_FLOATS,
            "obs_record_floats": OBS_RECORD_FLOATS,
            "resolution": [cfg.resolution, cfg.resolution],
            "focal": frames[0].camera.focal,
        }
        (sdir / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
        if dump_images:
            img_dir = sdir / "frames"
            img_dir.mkdir(exist_ok=True)
            for i, fr in enumerate(frames):
                write_ppm(img_dir / f"view_{i:03d}.ppm", fr.ldr)

        manifest_scenes.append(
            {
                "id": scene_id,
                "index": index,
                "split": splits[index],
                "scene": scene.to_json(),
                "n_frames": len(frames),
                "n_voxels": len(voxels),
            }
        )
        records.append(
            SceneRecord(
                scene_id=scene_id,
                index=index,
                split=splits[index],
                material=scene.material,
                scene_json=scene.to_json(),
                frames=[
                    FrameStats(fr.camera.rotation.copy(), fr.camera.position.copy(), fr.f_bar, fr.b_bar)
                    for fr in frames
                ],
                voxels=voxels,
            )
        )
        if log is not None and (index + 1) % 25 == 0:
            log(f"rendered {index + 1}/{cfg.n_scenes} scenes")

    manifest = {
        "format_version": 1,
        "config": cfg.to_json(),
        "seed": cfg.seed,
        "split_rule": "n_val = floor(val_fraction * n_scenes); validation scenes are "
        "the first n_val entries of the permutation seeded by (seed, split stream key)",
        "n_train": sum(1 for s in splits if s == "train"),
        "n_val": sum(1 for s in splits if s == "val"),
        "scenes": manifest_scenes,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return Dataset(root=out, manifest=manifest, records=records)


def _record_from_disk(root, entry):
    sdir = Path(root) / "scenes" / entry["id"]
    meta = json.loads((sdir / "meta.json").read_text())
    frame_array = np.fromfile(sdir / "frames.f32", dtype="<f4").astype(np.float64)
    frame_array = frame_array.reshape(meta["n_frames"], FRAME_RECORD_FLOATS)
    frames = [
        FrameStats(row[:9].reshape(3, 3), row[9:12], row[12:15], row[15:18]) for row in frame_array
    ]
    raw = np.fromfile(sdir / "voxels.f32", dtype="<f4").astype(np.float64)
    voxels = []
    cursor = 0
    for count in meta["obs_counts"]:
        header = raw[cursor : cursor + VOXEL_HEADER_FLOATS]
        cursor += VOXEL_HEADER_FLOATS
        obs = raw[cursor : cursor + count * OBS_RECORD_FLOATS].reshape(count, OBS_RECORD_FLOATS)
        cursor += count * OBS_RECORD_FLOATS
        frame_ids = obs[:, 6].astype(np.int64)
        voxels.append(
            VoxelSample(
                position=header[:3],
                normal=header[3:6],
                colors=obs[:, 0:3],
                view_dirs=obs[:, 3:6],
                frame_ids=frame_ids,
                f_bars=np.stack([frames[i].f_bar for i in frame_ids]) if count else np.zeros((0, 3)),
                b_bars=np.stack([frames[i].b_bar for i in frame_ids]) if count else np.zeros((0, 3)),
            )
        )
    material = WardBRDF.from_json(entry["scene"]["material"])
    return SceneRecord(
        scene_id=entry["id"],
        index=entry["index"],
        split=entry["split"],
        material=material,
        scene_json=entry["scene"],
        frames=frames,
        voxels=voxels,
    )


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    records = [_record_from_disk(root, entry) for entry in manifest["scenes"]]
    return Dataset(root=root, manifest=manifest, records=records)


def perturbed_validation_records(cfg: DatasetConfig, scale_range=(0.5, 1.5), seed_offset=1):
    """Re-render the validation scenes with their illumination rescaled by
    a random factor per scene: the brightness-shift ambiguity the image
    statistics regularizer is meant to absorb."""
    splits = split_assignment(cfg)
    records = []
    for index in range(cfg.n_scenes):
        if splits[index] != "val":
            continue
        scene, cameras, voxel_ss = build_scene(cfg, index)
        factor_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed + seed_offset, index]))
        factor = factor_rng.uniform(*scale_range)
        scene = Scene(
            shape=scene.shape,
            material=scene.material,
            environment=scene.environment.scaled(factor),
        )
        frames = [render_view(scene, cam) for cam in cameras]
        try:
            voxels = extract_voxel_samples(scene, frames, cfg.n_voxels, np.random.default_rng(voxel_ss))
        except DegenerateSceneError:
            continue
        records.append(
            SceneRecord(
                scene_id=_scene_id(index) + "_perturbed",
                index=index,
                split="val",
                material=scene.material,
                scene_json=scene.to_json(),
                frames=[
                    FrameStats(fr.camera.rotation.copy(), fr.camera.position.copy(), fr.f_bar, fr.b_bar)
                    for fr in frames
                ],
                voxels=voxels,
            )
        )
    return records
