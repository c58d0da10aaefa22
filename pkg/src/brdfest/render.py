"""Deterministic direct-illumination renderer.

Outgoing radiance per covered pixel is the closed-form sum over
directional lights plus the uniform-ambient hemisphere integral. Under
uniform ambient light the diffuse part integrates exactly to
rho_d * ambient on the 32x32 equal-solid-angle midpoint grid; the
specular part depends only on the view cosine, so it is evaluated with
the same grid on a dense cosine table and interpolated per pixel (the
table is validated against direct per-pixel quadrature in the tests).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .brdf import WardBRDF, hemisphere_grid, ward_from_cosines, ward_specular_scalar
from .colorspace import quantize_8bit, srgb_encode
from .errors import DegenerateFrameError, GeometryError
from .scene import Camera, Scene

AMBIENT_GRID = 32  # hemisphere quadrature resolution for the ambient term
AMBIENT_TABLE_SIZE = 512


@dataclass
class Frame:
    """One rendered view: pose, HDR/LDR color, depth (0 on background),
    and the per-view foreground/background LDR means."""

    camera: Camera
    hdr: np.ndarray
    ldr: np.ndarray
    depth: np.ndarray
    f_bar: np.ndarray
    b_bar: np.ndarray

    @property
    def foreground_mask(self):
        return self.depth > 0


def specular_ambient_grid_quadrature(mu_o, alpha, n_grid=AMBIENT_GRID):
    """Unit-rho_s specular response per view cosine on the plain n x n
    equal-solid-angle grid. Kept for reference: it cannot resolve lobes
    below alpha ~ 0.15 (see specular_ambient_quadrature)."""
    dirs, w = hemisphere_grid(n_grid, n_grid)
    mu_o = np.atleast_1d(np.asarray(mu_o, dtype=np.float64))
    s_o = np.sqrt(np.maximum(1.0 - mu_o**2, 0.0))
    w_o = np.stack([s_o, np.zeros_like(mu_o), mu_o], axis=-1)
    h = dirs[None, :, :] + w_o[:, None, :]
    h /= np.linalg.norm(h, axis=-1, keepdims=True)
    cos_h = np.clip(h[..., 2], 1e-12, 1.0)
    tan2 = (1.0 - cos_h**2) / cos_h**2
    spec = ward_specular_scalar(dirs[None, :, 2], mu_o[:, None], tan2, 1.0, alpha)
    return np.sum(spec * (dirs[:, 2] * w)[None, :], axis=1)


@lru_cache(maxsize=4)
def _ambient_ring_geometry(n_beta=64, n_gamma=24):
    n_fine = int(round(n_beta * 0.6))
    fine = np.geomspace(1e-3, 0.35, n_fine + 1)
    coarse = np.linspace(0.35, np.pi, n_beta - n_fine + 1)[1:]
    edges = np.concatenate([fine, coarse])
    beta = 0.5 * (edges[:-1] + edges[1:])
    dbeta = np.diff(edges)
    frac = (np.arange(n_gamma) + 0.5) / n_gamma
    return beta, dbeta, frac


def specular_ambient_quadrature(mu_o, alpha, n_beta=64, n_gamma=24):
    """Directional-hemispherical response of the unit-rho_s Ward specular
    lobe under uniform illumination, per view cosine.

    Integrates over incident rings around the mirror direction with
    geometrically refined ring angles and the exact above-horizon azimuth
    interval per ring, so narrow lobes (alpha down to 0.03) integrate
    correctly; the plain equal-solid-angle grid misses them entirely.
    """
    mu_o = np.atleast_1d(np.asarray(mu_o, dtype=np.float64))
    s_o = np.sqrt(np.maximum(1.0 - mu_o**2, 0.0))
    beta, dbeta, frac = _ambient_ring_geometry(n_beta, n_gamma)
    cb, sb = np.cos(beta), np.sin(beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (cb[None, :] * mu_o[:, None]) / np.maximum(sb[None, :] * s_o[:, None], 1e-300)
    gamma_star = np.arccos(np.clip(-a, -1.0, 1.0))
    gamma = gamma_star[..., None] * frac[None, None, :]
    mu_i = cb[None, :, None] * mu_o[:, None, None] + sb[None, :, None] * s_o[:, None, None] * np.cos(gamma)
    mu_i = np.maximum(mu_i, 0.0)
    cos_io = cb[None, :, None] * (2 * mu_o[:, None, None] ** 2 - 1) + (
        2 * mu_o[:, None, None] * s_o[:, None, None]
    ) * sb[None, :, None] * np.cos(gamma)
    cos_h = (mu_i + mu_o[:, None, None]) / np.sqrt(np.maximum(2.0 + 2.0 * cos_io, 1e-300))
    cos_h = np.clip(cos_h, 1e-12, 1.0)
    tan2 = (1.0 - cos_h**2) / cos_h**2
    spec = ward_specular_scalar(mu_i, mu_o[:, None, None], tan2, 1.0, alpha)
    w = (sb * dbeta)[None, :, None] * (2.0 * gamma_star[..., None] / len(frac)) * mu_i
    return np.sum(spec * w, axis=(1, 2))


@lru_cache(maxsize=128)
def _ambient_table(alpha, n_mu=AMBIENT_TABLE_SIZE):
    # square-law spacing: the response is steep near grazing
    mu = np.linspace(0.0, 1.0, n_mu) ** 2
    return mu, specular_ambient_quadrature(mu, alpha)


def ambient_radiance(material: WardBRDF, ambient_rgb, mu_o, exact=False):
    """Reflected radiance under uniform ambient light for view cosines
    mu_o: ambient * (rho_d + rho_s * S(mu_o, alpha))."""
    mu_o = np.asarray(mu_o, dtype=np.float64)
    if exact:
        s = specular_ambient_quadrature(mu_o, material.alpha)
    else:
        grid, table = _ambient_table(material.alpha)
        s = np.interp(np.clip(mu_o, 0.0, 1.0), grid, table)
    return material.rho_d[None, :] * ambient_rgb[None, :] + (
        material.rho_s * s
    )[:, None] * ambient_rgb[None, :]


def render_view(scene: Scene, camera: Camera, exact_ambient=False) -> Frame:
    """Render one frame. Shapes are convex so directional lights need no
    shadow rays beyond the horizon test."""
    if scene.shape.contains(camera.position[None, :])[0]:
        raise GeometryError("camera is inside the shape")

    h_px, w_px = camera.height, camera.width
    rays = camera.pixel_rays().reshape(-1, 3)
    t = scene.shape.ray_intersect(camera.position, rays)
    hit = np.isfinite(t)
    if not np.any(hit):
        raise DegenerateFrameError("no foreground pixels (shape out of view)")
    if not np.any(~hit):
        raise DegenerateFrameError("no background pixels (shape fills the view)")

    hdr = np.empty((h_px * w_px, 3))
    hdr[~hit] = scene.environment.ambient

    points = camera.position[None, :] + t[hit, None] * rays[hit]
    normals = scene.shape.normal(points)
    w_out = -rays[hit]
    mu_o = np.einsum("ij,ij->i", normals, w_out)
    mu_o = np.clip(mu_o, 1e-4, 1.0)

    radiance = ambient_radiance(scene.material, scene.environment.ambient, mu_o, exact=exact_ambient)
    for light_dir, light_rgb in scene.environment.lights:
        cos_i = normals @ light_dir
        lit = cos_i > 1e-6
        if not np.any(lit):
            continue
        half = light_dir[None, :] + w_out[lit]
        half /= np.linalg.norm(half, axis=-1, keepdims=True)
        cos_h = np.clip(np.einsum("ij,ij->i", normals[lit], half), 1e-12, 1.0)
        tan2 = (1.0 - cos_h**2) / cos_h**2
        f = ward_from_cosines(cos_i[lit], mu_o[lit], tan2, scene.material)
        radiance[lit] += f * light_rgb[None, :] * cos_i[lit, None]
    hdr[hit] = radiance

    ldr = quantize_8bit(srgb_encode(hdr))
    f_bar = ldr[hit].mean(axis=0)
    b_bar = ldr[~hit].mean(axis=0)
    depth = np.where(hit, t, 0.0)
    return Frame(
        camera=camera,
        hdr=hdr.reshape(h_px, w_px, 3),
        ldr=ldr.reshape(h_px, w_px, 3),
        depth=depth.reshape(h_px, w_px),
        f_bar=f_bar,
        b_bar=b_bar,
    )
