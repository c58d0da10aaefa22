"""Input validation helpers for the public estimator API."""

import numpy as np

from .dataset import SceneRecord
from .brdf import WardBRDF
from .errors import ConfigurationError


def check_rng(seed):
    """Accept an int seed, SeedSequence, Generator or None."""
    return np.random.default_rng(seed)


def check_scene_records(X):
    """Validate that X is a non-empty sequence of SceneRecord-like scenes
    with voxel observations and per-view statistics."""
    if X is None or len(X) == 0:
        raise ValueError("X must be a non-empty sequence of scene records")
    for i, rec in enumerate(X):
        for attr in ("voxels", "frames", "material"):
            if not hasattr(rec, attr):
                raise TypeError(
                    f"X[{i}] is not a scene record (missing {attr!r}); "
                    "build scenes with brdfest.dataset.generate_dataset or load_dataset"
                )
        if len(rec.voxels) == 0:
            raise ValueError(f"X[{i}] has no voxel samples")
        if len(rec.frames) == 0:
            raise ValueError(f"X[{i}] has no frame statistics")
    return list(X)


def check_targets(y, n_scenes):
    """Validate an (n, 5) physical-parameter target array."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n_scenes, 5):
        raise ValueError(f"y must have shape ({n_scenes}, 5), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    if np.any(y[:, :4] < 0) or np.any(y[:, :4] > 1) or np.any(y[:, 4] <= 0) or np.any(y[:, 4] > 1):
        raise ValueError(
            "targets out of range: reflectances must lie in [0,1], roughness in (0,1]"
        )
    return y


def records_with_targets(X, y):
    """Scene records whose ground-truth material is overridden by y when
    given (X records are not mutated)."""
    records = check_scene_records(X)
    if y is None:
        return records
    y = check_targets(y, len(records))
    out = []
    for rec, row in zip(records, y):
        out.append(
            SceneRecord(
                scene_id=rec.scene_id,
                index=rec.index,
                split=rec.split,
                material=WardBRDF.from_vector(row),
                scene_json=rec.scene_json,
                frames=rec.frames,
                voxels=rec.voxels,
            )
        )
    return out


def check_positive(name, value):
    if value is None or value <= 0:
        raise ConfigurationError(f"{name} must be positive, got {value}")
    return value
