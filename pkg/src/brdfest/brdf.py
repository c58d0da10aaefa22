"""Isotropic Ward BRDF model, its perceptual reparameterization, and the
three distance metrics used as regression losses.

Directions are unit 3-vectors in the local shading frame (surface normal
along +z), or equivalently spherical angles with theta measured from the
normal. All public evaluators are vectorized over leading axes.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .colorspace import lab_to_rgb, luminance, rgb_to_lab
from .errors import ConfigurationError, InvalidDirectionError

# Minimum cosine accepted for an incident/outgoing direction.
MIN_COS = 1e-6
# Grazing clamp applied inside the specular denominator (renderer convention).
SPECULAR_COS_CLAMP = 1e-4
# Epsilon inside the cube root keeping its gradient finite at zero distance.
CUBEROOT_EPS = 1e-12

METRICS = ("rmse1", "rmse2", "cuberoot")


@dataclass
class WardBRDF:
    """Physical Ward parameters: diffuse RGB albedo, scalar specular
    reflectance, scalar roughness."""

    rho_d: np.ndarray
    rho_s: float
    alpha: float

    def __post_init__(self):
        self.rho_d = np.asarray(self.rho_d, dtype=np.float64).reshape(3)
        self.rho_s = float(self.rho_s)
        self.alpha = float(self.alpha)

    def validate(self):
        if np.any(self.rho_d < 0) or np.any(self.rho_d > 1):
            raise ConfigurationError(f"rho_d outside [0,1]: {self.rho_d}")
        if not 0.0 <= self.rho_s <= 1.0:
            raise ConfigurationError(f"rho_s outside [0,1]: {self.rho_s}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"alpha outside (0,1]: {self.alpha}")
        return self

    def to_vector(self):
        """Flat physical parameter vector (r, g, b, rho_s, alpha)."""
        return np.concatenate([self.rho_d, [self.rho_s, self.alpha]])

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=np.float64).reshape(5)
        return cls(rho_d=vec[:3], rho_s=vec[3], alpha=vec[4])

    def to_json(self):
        return {"rho_d": [float(v) for v in self.rho_d], "rho_s": self.rho_s, "alpha": self.alpha}

    @classmethod
    def from_json(cls, obj):
        return cls(rho_d=np.array(obj["rho_d"]), rho_s=obj["rho_s"], alpha=obj["alpha"])


@dataclass
class PerceptualBRDF:
    """Perceptual parameters: CIE Lab of the diffuse albedo plus gloss
    contrast c and gloss distinctness d = 1 - alpha."""

    L: float
    a: float
    b: float
    c: float
    d: float

    def to_vector(self):
        return np.array([self.L, self.a, self.b, self.c, self.d], dtype=np.float64)

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=np.float64).reshape(5)
        return cls(*(float(v) for v in vec))


def spherical_direction(theta, phi):
    """Unit vector from inclination theta (from +z) and azimuth phi."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def ward_from_cosines(cos_i, cos_o, tan2_half, theta: WardBRDF):
    """Core Ward evaluation from precomputed geometry terms.

    cos_i, cos_o are clamped to SPECULAR_COS_CLAMP inside the specular
    denominator only; the diffuse term is unaffected.
    """
    cos_i = np.maximum(cos_i, SPECULAR_COS_CLAMP)
    cos_o = np.maximum(cos_o, SPECULAR_COS_CLAMP)
    spec = theta.rho_s * np.exp(-tan2_half / theta.alpha**2) / (
        4.0 * np.pi * theta.alpha**2 * np.sqrt(cos_i * cos_o)
    )
    return theta.rho_d / np.pi + spec[..., None]


def half_vector_tan2(w_i, w_o):
    """tan^2 of the half-vector inclination for direction arrays (...,3)."""
    h = w_i + w_o
    h = h / np.linalg.norm(h, axis=-1, keepdims=True)
    cos_h = np.clip(h[..., 2], -1.0, 1.0)
    cos2 = np.maximum(cos_h * cos_h, 1e-300)
    return (1.0 - cos2) / cos2


def eval_ward(w_i, w_o, theta: WardBRDF):
    """Ward BRDF value (per RGB channel, 1/sr) for local-frame directions.

    Raises InvalidDirectionError for directions at or below grazing
    (cos theta <= 1e-6); the renderer clamps before calling.
    """
    w_i = np.asarray(w_i, dtype=np.float64)
    w_o = np.asarray(w_o, dtype=np.float64)
    cos_i = w_i[..., 2]
    cos_o = w_o[..., 2]
    if np.any(cos_i <= MIN_COS) or np.any(cos_o <= MIN_COS):
        raise InvalidDirectionError("direction at or below grazing (cos theta <= 1e-6)")
    return ward_from_cosines(cos_i, cos_o, half_vector_tan2(w_i, w_o), theta)


def to_perceptual(theta: WardBRDF) -> PerceptualBRDF:
    """Physical -> perceptual. The scalar diffuse level entering the gloss
    contrast is the Rec.709 luminance of rho_d."""
    L, a, b = rgb_to_lab(theta.rho_d)
    half = luminance(theta.rho_d) / 2.0
    c = np.cbrt(theta.rho_s + half) - np.cbrt(half)
    return PerceptualBRDF(L=float(L), a=float(a), b=float(b), c=float(c), d=1.0 - theta.alpha)


def from_perceptual(p: PerceptualBRDF) -> WardBRDF:
    """Perceptual -> physical, inverting the gloss-contrast cube roots.

    A c implying rho_s < 0 is clamped to zero; use
    perceptual_to_physical() when the clamp count matters.
    """
    rho_d = lab_to_rgb([p.L, p.a, p.b])
    half = luminance(rho_d) / 2.0
    rho_s = (p.c + np.cbrt(half)) ** 3 - half
    return WardBRDF(rho_d=rho_d, rho_s=max(float(rho_s), 0.0), alpha=1.0 - p.d)


def physical_to_perceptual(vectors):
    """Batch (n,5) physical vectors -> (n,5) perceptual vectors."""
    vectors = np.asarray(vectors, dtype=np.float64).reshape(-1, 5)
    lab = rgb_to_lab(vectors[:, :3])
    half = luminance(vectors[:, :3]) / 2.0
    c = np.cbrt(vectors[:, 3] + half) - np.cbrt(half)
    d = 1.0 - vectors[:, 4]
    return np.concatenate([lab, c[:, None], d[:, None]], axis=1)


def perceptual_to_physical(vectors):
    """Batch (n,5) perceptual vectors -> ((n,5) physical, clamp count).

    The clamp count says how many rows implied rho_s < 0 before clamping.
    """
    vectors = np.asarray(vectors, dtype=np.float64).reshape(-1, 5)
    rho_d = lab_to_rgb(vectors[:, :3])
    half = luminance(rho_d) / 2.0
    rho_s = (vectors[:, 3] + np.cbrt(half)) ** 3 - half
    n_clamped = int(np.sum(rho_s < 0))
    alpha = 1.0 - vectors[:, 4]
    return np.concatenate([rho_d, np.maximum(rho_s, 0.0)[:, None], alpha[:, None]], axis=1), n_clamped


def hemisphere_grid(n_theta, n_phi):
    """Equal-solid-angle midpoint grid over the upper hemisphere.

    Returns (directions (n,3), weights (n,)) with weights summing to 2*pi.
    Cells are uniform in cos(theta) and phi, sampled at midpoints.
    """
    u = (np.arange(n_theta) + 0.5) / n_theta  # cos(theta) midpoints
    phi = (np.arange(n_phi) + 0.5) / n_phi * 2.0 * np.pi
    uu, pp = np.meshgrid(u, phi, indexing="ij")
    st = np.sqrt(1.0 - uu**2)
    dirs = np.stack([st * np.cos(pp), st * np.sin(pp), uu], axis=-1).reshape(-1, 3)
    w = np.full(dirs.shape[0], 2.0 * np.pi / (n_theta * n_phi))
    return dirs, w


@lru_cache(maxsize=8)
def _pair_grid(n):
    """Cached geometry for the plain double-hemisphere pair quadrature:
    cos_i, cos_o, tan^2(theta_h) and combined weights (incl. the cos theta_i
    factor) for all n^2 x n^2 direction pairs."""
    dirs, w = hemisphere_grid(n, n)
    k = dirs.shape[0]
    tan2 = half_vector_tan2(dirs[:, None, :], dirs[None, :, :])
    cos_i = np.broadcast_to(dirs[:, None, 2], (k, k))
    cos_o = np.broadcast_to(dirs[None, :, 2], (k, k))
    weight = (w[:, None] * w[None, :]) * cos_i
    return cos_i, cos_o, tan2, weight


# Eval/train node budgets for the lobe-adapted rule: (outgoing grid n_theta,
# n_phi, rings around the mirror direction, azimuth nodes per ring).
LOBE_GRID_EVAL = (16, 16, 48, 16)
LOBE_GRID_TRAIN = (8, 8, 32, 8)


@lru_cache(maxsize=8)
def lobe_quadrature(n_wo_theta=16, n_wo_phi=16, n_beta=48, n_gamma=16):
    """Fixed quadrature for the cosine-weighted BRDF-difference integral,
    adapted to the Ward specular lobe.

    The outgoing direction runs over an equal-solid-angle grid. For each
    w_o, the incident hemisphere is parameterized by the angle beta from
    the mirror direction of w_o (where the half-angle is zero), with beta
    rings geometrically refined toward zero so lobes down to alpha ~ 0.03
    are resolved, something no affordable uniform pair grid achieves. The
    azimuth interval where w_i stays above the horizon is computed in
    closed form per ring, so cells are never cut by the domain boundary.

    Returns constant arrays (mu_i, mu_o, tan2_half, weight); weight already
    contains the cos(theta_i) factor of the integrand, so
    sum(g * weight) ~ integral of g * cos(theta_i) over both hemispheres.
    """
    wo_dirs, wo_w = hemisphere_grid(n_wo_theta, n_wo_phi)
    mu_o = wo_dirs[:, 2]
    s_o = np.sqrt(1.0 - mu_o**2)

    n_fine = int(round(n_beta * 0.6))
    fine = np.geomspace(1e-3, 0.35, n_fine + 1)
    coarse = np.linspace(0.35, np.pi, n_beta - n_fine + 1)[1:]
    edges = np.concatenate([fine, coarse])
    beta = 0.5 * (edges[:-1] + edges[1:])
    dbeta = np.diff(edges)

    cb, sb = np.cos(beta), np.sin(beta)
    # Valid azimuth half-width gamma* where mu_i > 0:
    # mu_i = cos(beta) mu_o + sin(beta) s_o cos(gamma).
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(s_o[:, None] > 0, (cb[None, :] * mu_o[:, None]) / (sb[None, :] * np.maximum(s_o[:, None], 1e-300)), np.inf)
    gamma_star = np.arccos(np.clip(-a, -1.0, 1.0))  # (K, n_beta)
    frac = (np.arange(n_gamma) + 0.5) / n_gamma
    gamma = gamma_star[..., None] * frac  # (K, n_beta, n_gamma)

    mu_i = cb[None, :, None] * mu_o[:, None, None] + sb[None, :, None] * s_o[:, None, None] * np.cos(gamma)
    mu_i = np.maximum(mu_i, 0.0)
    # w_i . w_o with the azimuth measured from the (z, w_o) plane.
    cos_io = cb[None, :, None] * (2 * mu_o[:, None, None] ** 2 - 1) + (
        2 * mu_o[:, None, None] * s_o[:, None, None]
    ) * sb[None, :, None] * np.cos(gamma)
    cos_h = (mu_i + mu_o[:, None, None]) / np.sqrt(np.maximum(2.0 + 2.0 * cos_io, 1e-300))
    cos_h = np.clip(cos_h, 1e-12, 1.0)
    tan2 = (1.0 - cos_h**2) / cos_h**2

    # Solid-angle weight sin(beta) dbeta * (2 gamma*/n_gamma), doubled for
    # the mirror-symmetric gamma half, times the outer weight and cos_i.
    w = (
        wo_w[:, None, None]
        * (sb * dbeta)[None, :, None]
        * (2.0 * gamma_star[..., None] / n_gamma)
        * mu_i
    )
    keep = w.ravel() > 0
    mu_o_full = np.broadcast_to(mu_o[:, None, None], mu_i.shape)
    return (
        mu_i.ravel()[keep],
        mu_o_full.ravel()[keep],
        tan2.ravel()[keep],
        w.ravel()[keep],
    )


def ward_specular_scalar(mu_i, mu_o, tan2_half, rho_s, alpha):
    """Scalar Ward specular term with the grazing clamp applied inside the
    denominator (shared by the metric and the renderer)."""
    ci = np.maximum(mu_i, SPECULAR_COS_CLAMP)
    co = np.maximum(mu_o, SPECULAR_COS_CLAMP)
    return rho_s * np.exp(-tan2_half / alpha**2) / (4.0 * np.pi * alpha**2 * np.sqrt(ci * co))


def cuberoot_distance(theta: WardBRDF, theta_hat: WardBRDF, grid=LOBE_GRID_EVAL, rule="lobe", n_grid=16):
    """Cube root of the cosine-weighted integral of the l2 norm of the BRDF
    difference over both hemispheres, by a fixed deterministic quadrature.

    rule="lobe" (default) integrates the constant diffuse difference
    analytically and the specular residual on the lobe-adapted grid;
    rule="pair_grid" is the plain n_grid x n_grid equal-solid-angle pair
    rule, kept for reference (it under-resolves lobes below alpha ~ 0.2).
    """
    if rule == "pair_grid":
        cos_i, cos_o, tan2, weight = _pair_grid(n_grid)
        f1 = ward_from_cosines(cos_i, cos_o, tan2, theta)
        f2 = ward_from_cosines(cos_i, cos_o, tan2, theta_hat)
        norm = np.sqrt(np.sum((f1 - f2) ** 2, axis=-1))
        integral = np.sum(norm * weight)
        return float(np.cbrt(integral + CUBEROOT_EPS))
    if rule != "lobe":
        raise ConfigurationError(f"unknown cuberoot rule {rule!r}")

    mu_i, mu_o, tan2, weight = lobe_quadrature(*grid)
    d = (theta.rho_d - theta_hat.rho_d) / np.pi
    d_norm2 = float(d @ d)
    d_norm = np.sqrt(d_norm2)
    d_sum = float(d.sum())
    base = d_norm * 2.0 * np.pi**2  # integral of ||diffuse diff|| * cos_i, exact
    s = ward_specular_scalar(mu_i, mu_o, tan2, theta.rho_s, theta.alpha) - ward_specular_scalar(
        mu_i, mu_o, tan2, theta_hat.rho_s, theta_hat.alpha
    )
    # ||d + s*(1,1,1)|| - ||d||, zero wherever the specular parts cancel.
    residual = np.sqrt(np.maximum(d_norm2 + 2.0 * d_sum * s + 3.0 * s**2, 0.0)) - d_norm
    integral = base + np.sum(residual * weight)
    return float(np.cbrt(max(integral, 0.0) + CUBEROOT_EPS))


def brdf_distance(theta: WardBRDF, theta_hat: WardBRDF, metric, lambda_g=1.0, n_grid=16):
    """Distance between two Ward BRDFs under one of the three metrics.

    rmse1: squared parameter differences in physical space.
    rmse2: squared differences in perceptual space, gloss weighted by
    lambda_g. cuberoot: see cuberoot_distance().
    """
    metric = str(metric).lower()
    if metric == "rmse1":
        return float(
            np.sum((theta.rho_d - theta_hat.rho_d) ** 2)
            + (theta.rho_s - theta_hat.rho_s) ** 2
            + (theta.alpha - theta_hat.alpha) ** 2
        )
    if metric == "rmse2":
        p = to_perceptual(theta)
        q = to_perceptual(theta_hat)
        lab = (p.L - q.L) ** 2 + (p.a - q.a) ** 2 + (p.b - q.b) ** 2
        gloss = (p.c - q.c) ** 2 + (p.d - q.d) ** 2
        return float(lab + lambda_g * gloss)
    if metric == "cuberoot":
        return cuberoot_distance(theta, theta_hat, n_grid=n_grid)
    raise ConfigurationError(f"unknown metric {metric!r}; expected one of {METRICS}")


def random_ward(rng, rho_s_range=(0.0, 0.4), alpha_range=(0.03, 1.0), lum_cap=1.0):
    """Draw a valid Ward material: luminance(rho_d) + rho_s <= lum_cap.

    rho_s is drawn first, then an RGB albedo is rescaled until the energy
    budget holds. Used by both the dataset generator and tests.
    """
    rho_s = rng.uniform(*rho_s_range)
    alpha = rng.uniform(*alpha_range)
    rho_d = rng.uniform(0.02, 1.0, size=3)
    budget = lum_cap - rho_s
    lum = luminance(rho_d)
    if lum > budget:
        rho_d = rho_d * (budget / lum) * rng.uniform(0.35, 0.98)
    return WardBRDF(rho_d=rho_d, rho_s=rho_s, alpha=alpha).validate()
