"""Analytic shapes for the synthetic scenes: sphere, axis-aligned box and
Barr superellipsoid.

All shapes are convex, centered at the origin, and expose the same
interface: first-hit ray intersection, outward normals, area-uniform
surface sampling, point containment and a segment occlusion test. Sphere
and box are exact; the superellipsoid uses bracketing plus bisection on
its implicit function (exponents are kept in the convex range).
"""

from dataclasses import dataclass

import numpy as np

_EPS = 1e-9


@dataclass
class Sphere:
    radius: float = 0.7

    kind = "sphere"

    def max_extent(self):
        return self.radius

    def params(self):
        return {"kind": self.kind, "radius": self.radius}

    def contains(self, points):
        points = np.atleast_2d(points)
        return np.sum(points**2, axis=-1) < self.radius**2

    def ray_intersect(self, origin, directions):
        """First hit distance per ray, inf for misses. origin (3,) is
        shared; directions (n,3) must be unit."""
        directions = np.atleast_2d(directions)
        oc = np.asarray(origin, dtype=np.float64)
        b = directions @ oc
        c = oc @ oc - self.radius**2
        disc = b * b - c
        t = np.full(directions.shape[0], np.inf)
        ok = disc >= 0
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = -b - sq
        t1 = -b + sq
        near = np.where(t0 > _EPS, t0, np.where(t1 > _EPS, t1, np.inf))
        t[ok] = near[ok]
        return t

    def normal(self, points):
        points = np.atleast_2d(points)
        return points / np.linalg.norm(points, axis=-1, keepdims=True)

    def sample_surface(self, n, rng):
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        return v * self.radius, v

    def occluded(self, points, target):
        """True where the open segment point -> target crosses the body."""
        points = np.atleast_2d(points)
        seg = np.asarray(target, dtype=np.float64) - points
        dist = np.linalg.norm(seg, axis=-1)
        d = seg / dist[:, None]
        start = points + 1e-6 * d
        b = np.einsum("ij,ij->i", start, d)
        c = np.einsum("ij,ij->i", start, start) - self.radius**2
        disc = b * b - c
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = -b - sq
        t1 = -b + sq
        thit = np.where(t0 > _EPS, t0, np.where(t1 > _EPS, t1, np.inf))
        thit = np.where(disc >= 0, thit, np.inf)
        return thit < dist - 1e-6


@dataclass
class Box:
    half_extents: np.ndarray = None

    kind = "box"

    def __post_init__(self):
        if self.half_extents is None:
            self.half_extents = np.array([0.5, 0.5, 0.5])
        self.half_extents = np.asarray(self.half_extents, dtype=np.float64).reshape(3)

    def max_extent(self):
        return float(np.linalg.norm(self.half_extents))

    def params(self):
        return {"kind": self.kind, "half_extents": [float(v) for v in self.half_extents]}

    def contains(self, points):
        points = np.atleast_2d(points)
        return np.all(np.abs(points) < self.half_extents, axis=-1)

    def _slab_hit(self, origins, directions):
        """Slab intervals for rays with broadcastable origins (n,3)/(3,)."""
        directions = np.atleast_2d(directions)
        origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), directions.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / directions
            ta = (-self.half_extents - origins) * inv
            tb = (self.half_extents - origins) * inv
        parallel = np.abs(directions) < 1e-15
        inside = np.abs(origins) <= self.half_extents
        t_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(ta, tb))
        t_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(ta, tb))
        return np.max(t_lo, axis=-1), np.min(t_hi, axis=-1)

    def ray_intersect(self, origin, directions):
        enter, exit_ = self._slab_hit(origin, directions)
        hit = (enter <= exit_) & (exit_ > _EPS)
        t = np.where(enter > _EPS, enter, exit_)
        return np.where(hit, t, np.inf)

    def normal(self, points):
        points = np.atleast_2d(points)
        rel = np.abs(points) / self.half_extents
        axis = np.argmax(rel, axis=-1)
        n = np.zeros_like(points)
        rows = np.arange(points.shape[0])
        n[rows, axis] = np.sign(points[rows, axis])
        return n

    def sample_surface(self, n, rng):
        hx, hy, hz = self.half_extents
        face_areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy]) * 4.0
        face = rng.choice(6, size=n, p=face_areas / face_areas.sum())
        uv = rng.uniform(-1.0, 1.0, size=(n, 2))
        points = np.empty((n, 3))
        normals = np.zeros((n, 3))
        axis = face // 2
        sign = np.where(face % 2 == 0, 1.0, -1.0)
        for a in range(3):
            sel = axis == a
            others = [i for i in range(3) if i != a]
            points[sel, a] = sign[sel] * self.half_extents[a]
            points[sel, others[0]] = uv[sel, 0] * self.half_extents[others[0]]
            points[sel, others[1]] = uv[sel, 1] * self.half_extents[others[1]]
            normals[sel, a] = sign[sel]
        return points, normals

    def occluded(self, points, target):
        points = np.atleast_2d(points)
        seg = np.asarray(target, dtype=np.float64) - points
        dist = np.linalg.norm(seg, axis=-1)
        d = seg / dist[:, None]
        enter, exit_ = self._slab_hit(points + 1e-6 * d, d)
        hit = (enter <= exit_) & (exit_ > _EPS)
        t = np.where(enter > _EPS, enter, exit_)
        return hit & (t < dist - 1e-6)


@dataclass
class Superellipsoid:
    half_axes: np.ndarray = None
    e_ns: float = 1.0  # north-south (z) exponent
    e_ew: float = 1.0  # east-west (xy) exponent

    kind = "superellipsoid"

    # Convex range; also keeps normals bounded away from the corner blowup.
    EXPONENT_RANGE = (0.5, 1.8)

    def __post_init__(self):
        if self.half_axes is None:
            self.half_axes = np.array([0.6, 0.6, 0.6])
        self.half_axes = np.asarray(self.half_axes, dtype=np.float64).reshape(3)

    def max_extent(self):
        return float(np.linalg.norm(self.half_axes))

    def params(self):
        return {
            "kind": self.kind,
            "half_axes": [float(v) for v in self.half_axes],
            "e_ns": self.e_ns,
            "e_ew": self.e_ew,
        }

    def implicit(self, points):
        """Barr inside-outside function minus one (negative inside)."""
        points = np.atleast_2d(points)
        q2 = (points / self.half_axes) ** 2
        u = q2[..., 0] ** (1.0 / self.e_ew) + q2[..., 1] ** (1.0 / self.e_ew)
        return u ** (self.e_ew / self.e_ns) + q2[..., 2] ** (1.0 / self.e_ns) - 1.0

    def contains(self, points):
        return self.implicit(points) < 0.0

    def _aabb_interval(self, origins, directions):
        origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), directions.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / directions
            ta = (-self.half_axes - origins) * inv
            tb = (self.half_axes - origins) * inv
        parallel = np.abs(directions) < 1e-15
        inside = np.abs(origins) <= self.half_axes
        t_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(ta, tb))
        t_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(ta, tb))
        return np.max(t_lo, axis=-1), np.min(t_hi, axis=-1)

    def ray_intersect(self, origin, directions, n_steps=72, n_bisect=34):
        """First hit by marching the AABB-clipped segment, then bisection.
        Convexity keeps the interior a single interval; grazing chords
        shorter than the march step can be missed (silhouette pixels)."""
        directions = np.atleast_2d(directions)
        origin = np.asarray(origin, dtype=np.float64)
        enter, exit_ = self._aabb_interval(origin, directions)
        valid = (enter <= exit_) & (exit_ > _EPS)
        t = np.full(directions.shape[0], np.inf)
        if not np.any(valid):
            return t
        idx = np.where(valid)[0]
        t0 = np.maximum(enter[idx], _EPS)
        t1 = exit_[idx]
        ts = np.linspace(0.0, 1.0, n_steps)[None, :]
        tt = t0[:, None] + (t1 - t0)[:, None] * ts
        pts = origin[None, None, :] + tt[..., None] * directions[idx, None, :]
        f = self.implicit(pts.reshape(-1, 3)).reshape(len(idx), n_steps)
        neg = f < 0
        has = np.any(neg, axis=1)
        first = np.argmax(neg, axis=1)
        hit_rows = np.where(has & (first > 0))[0]
        if hit_rows.size == 0:
            return t
        lo = tt[hit_rows, first[hit_rows] - 1]
        hi = tt[hit_rows, first[hit_rows]]
        dirs_h = directions[idx[hit_rows]]
        for _ in range(n_bisect):
            mid = 0.5 * (lo + hi)
            fm = self.implicit(origin[None, :] + mid[:, None] * dirs_h)
            inside = fm < 0
            hi = np.where(inside, mid, hi)
            lo = np.where(inside, lo, mid)
        t[idx[hit_rows]] = 0.5 * (lo + hi)
        return t

    def normal(self, points):
        points = np.atleast_2d(points)
        q = points / self.half_axes
        aq = np.abs(q)
        u = aq[..., 0] ** (2.0 / self.e_ew) + aq[..., 1] ** (2.0 / self.e_ew)
        # d/dx of (u^(e_ew/e_ns)): common factor 2/e_ns u^(e_ew/e_ns - 1)
        safe_u = np.maximum(u, 1e-14)
        fac = (2.0 / self.e_ns) * safe_u ** (self.e_ew / self.e_ns - 1.0)
        gx = fac * aq[..., 0] ** (2.0 / self.e_ew - 1.0) * np.sign(q[..., 0]) / self.half_axes[0]
        gy = fac * aq[..., 1] ** (2.0 / self.e_ew - 1.0) * np.sign(q[..., 1]) / self.half_axes[1]
        gz = (2.0 / self.e_ns) * aq[..., 2] ** (2.0 / self.e_ns - 1.0) * np.sign(q[..., 2]) / self.half_axes[2]
        g = np.stack([gx, gy, gz], axis=-1)
        # At the poles the xy gradient degenerates; fall back to the axis.
        on_axis = u < 1e-12
        g[on_axis] = np.array([0.0, 0.0, 1.0]) * np.sign(points[on_axis][:, 2:3])
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def _param_point(self, eta, omega):
        def spow(s, e):
            return np.sign(s) * np.abs(s) ** e

        ce = spow(np.cos(eta), self.e_ns)
        se = spow(np.sin(eta), self.e_ns)
        cw = spow(np.cos(omega), self.e_ew)
        sw = spow(np.sin(omega), self.e_ew)
        return np.stack(
            [self.half_axes[0] * ce * cw, self.half_axes[1] * ce * sw, self.half_axes[2] * se],
            axis=-1,
        )

    def _area_table(self, n_eta=96, n_omega=192):
        eta = np.linspace(-np.pi / 2, np.pi / 2, n_eta + 1)
        omega = np.linspace(-np.pi, np.pi, n_omega + 1)
        ee, ww = np.meshgrid(eta, omega, indexing="ij")
        corners = self._param_point(ee, ww)
        a = corners[:-1, :-1]
        bq = corners[:-1, 1:]
        cq = corners[1:, :-1]
        dq = corners[1:, 1:]
        area = 0.5 * np.linalg.norm(np.cross(bq - a, cq - a), axis=-1) + 0.5 * np.linalg.norm(
            np.cross(bq - dq, cq - dq), axis=-1
        )
        return eta, omega, area

    def sample_surface(self, n, rng):
        """Area-uniform samples via a tabulated parameter-space area
        density (exact up to the tabulation cell size)."""
        if not hasattr(self, "_cached_table"):
            self._cached_table = self._area_table()
        eta, omega, area = self._cached_table
        flat = area.ravel()
        cells = rng.choice(flat.size, size=n, p=flat / flat.sum())
        ei, oi = np.unravel_index(cells, area.shape)
        u = rng.uniform(size=n)
        v = rng.uniform(size=n)
        eta_s = eta[ei] + u * (eta[ei + 1] - eta[ei])
        omega_s = omega[oi] + v * (omega[oi + 1] - omega[oi])
        points = self._param_point(eta_s, omega_s)
        return points, self.normal(points)

    def occluded(self, points, target, n_steps=192):
        points = np.atleast_2d(points)
        target = np.asarray(target, dtype=np.float64)
        ts = np.linspace(0.0, 1.0, n_steps + 2)[1:-1]
        seg = target[None, :] - points
        probe = points[:, None, :] + ts[None, :, None] * seg[:, None, :]
        f = self.implicit(probe.reshape(-1, 3)).reshape(points.shape[0], n_steps)
        return np.any(f < -1e-9, axis=1)


def make_shape(params):
    kind = params["kind"]
    if kind == "sphere":
        return Sphere(radius=params["radius"])
    if kind == "box":
        return Box(half_extents=np.array(params["half_extents"]))
    if kind == "superellipsoid":
        return Superellipsoid(
            half_axes=np.array(params["half_axes"]), e_ns=params["e_ns"], e_ew=params["e_ew"]
        )
    raise ValueError(f"unknown shape kind {kind!r}")
