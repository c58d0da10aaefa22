"""Scene description: shape + material + illumination, and the pinhole
cameras orbiting it."""

from dataclasses import dataclass, field

import numpy as np

from .brdf import WardBRDF
from .errors import ConfigurationError
from .geometry import make_shape

GOLDEN_FRACTION = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class Environment:
    """Uniform ambient radiance plus up to a few directional lights.

    Each light is (direction toward the light as a unit vector, RGB
    radiance). The ambient term is what background pixels see directly;
    delta lights are invisible to camera rays.
    """

    ambient: np.ndarray
    lights: list = field(default_factory=list)

    def __post_init__(self):
        self.ambient = np.asarray(self.ambient, dtype=np.float64).reshape(3)
        self.lights = [
            (np.asarray(d, dtype=np.float64).reshape(3), np.asarray(r, dtype=np.float64).reshape(3))
            for d, r in self.lights
        ]
        if np.any(self.ambient < 0) or any(np.any(r < 0) for _, r in self.lights):
            raise ConfigurationError("negative radiance in environment")
        if not (np.any(self.ambient > 0) or self.lights):
            raise ConfigurationError("environment is completely dark")

    def scaled(self, factor):
        return Environment(
            ambient=self.ambient * factor,
            lights=[(d.copy(), r * factor) for d, r in self.lights],
        )

    def to_json(self):
        return {
            "ambient": [float(v) for v in self.ambient],
            "lights": [
                {"direction": [float(v) for v in d], "radiance": [float(v) for v in r]}
                for d, r in self.lights
            ],
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            ambient=np.array(obj["ambient"]),
            lights=[(np.array(l["direction"]), np.array(l["radiance"])) for l in obj["lights"]],
        )


@dataclass
class Scene:
    shape: object
    material: WardBRDF
    environment: Environment

    def to_json(self):
        return {
            "shape": self.shape.params(),
            "material": self.material.to_json(),
            "environment": self.environment.to_json(),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            shape=make_shape(obj["shape"]),
            material=WardBRDF.from_json(obj["material"]),
            environment=Environment.from_json(obj["environment"]),
        )


@dataclass
class Camera:
    """Pinhole camera looking at the origin. Pose maps world to camera:
    p_cam = R (p_world - position); camera axes are x right, y down,
    z forward."""

    position: np.ndarray
    rotation: np.ndarray
    width: int
    height: int
    focal: float

    @classmethod
    def look_at_origin(cls, position, width, height, fov_deg):
        position = np.asarray(position, dtype=np.float64).reshape(3)
        forward = -position / np.linalg.norm(position)
        up = np.array([0.0, 0.0, 1.0])
        if abs(forward @ up) > 0.999:
            up = np.array([1.0, 0.0, 0.0])
        right = np.cross(forward, up)
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward], axis=0)
        focal = (width / 2.0) / np.tan(np.deg2rad(fov_deg) / 2.0)
        return cls(position=position, rotation=rotation, width=width, height=height, focal=focal)

    def pixel_rays(self):
        """World-space unit directions through all pixel centers,
        shape (H, W, 3)."""
        j = np.arange(self.width) + 0.5
        i = np.arange(self.height) + 0.5
        u, v = np.meshgrid(j, i)
        x = (u - self.width / 2.0) / self.focal
        y = (v - self.height / 2.0) / self.focal
        d_cam = np.stack([x, y, np.ones_like(x)], axis=-1)
        d_world = d_cam @ self.rotation
        return d_world / np.linalg.norm(d_world, axis=-1, keepdims=True)

    def project(self, points):
        """Project world points; returns (u, v, in_front) with pixel
        coordinates in image units."""
        rel = (np.atleast_2d(points) - self.position) @ self.rotation.T
        z = rel[:, 2]
        in_front = z > 1e-9
        zz = np.where(in_front, z, 1.0)
        u = self.focal * rel[:, 0] / zz + self.width / 2.0
        v = self.focal * rel[:, 1] / zz + self.height / 2.0
        return u, v, in_front


def orbit_cameras(rng, n_views, radius_range, elevation_range_deg, width, height, fov_deg):
    """A randomized orbit: azimuths advance by the golden fraction with
    jitter, elevations are drawn per view. Returns cameras in sequence
    order (coverage sweeps truncate this prefix)."""
    radius = rng.uniform(*radius_range)
    phi0 = rng.uniform(0.0, 2.0 * np.pi)
    cameras = []
    for j in range(n_views):
        phi = phi0 + 2.0 * np.pi * (j * GOLDEN_FRACTION) + rng.uniform(-0.12, 0.12)
        elev = np.deg2rad(rng.uniform(*elevation_range_deg))
        pos = radius * np.array(
            [np.cos(phi) * np.cos(elev), np.sin(phi) * np.cos(elev), np.sin(elev)]
        )
        cameras.append(Camera.look_at_origin(pos, width, height, fov_deg))
    return cameras
