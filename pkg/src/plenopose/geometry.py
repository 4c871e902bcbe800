"""Rigid poses, object models and parametric surfaces of revolution.

Object frames put the symmetry axis on local +z with the origin at
mid-height.  A surface of revolution (``lathe``) is a polyline profile of
``(height, radius)`` vertices closed by flat caps; a cylinder is the
two-vertex special case.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

# surface samples per model; dense enough that 1.5 px splats leave no pinholes at desk range
DEFAULT_POINTS = 5000


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Pose:
    """Object-to-camera transform: ``X_cam = R(q) X_obj + translation``."""

    translation: np.ndarray
    quaternion: np.ndarray  # (w, x, y, z), unit norm

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        if not np.all(np.isfinite(t)):
            raise GeometryError("translation must be finite")
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0:
            raise GeometryError("quaternion must be finite and nonzero")
        if abs(n - 1.0) > 1e-9:
            q = q / n
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", q)

    @classmethod
    def from_rotation(cls, rotation: Rotation, translation) -> "Pose":
        return cls(translation, rotation.as_quat(scalar_first=True))

    @classmethod
    def identity(cls, translation=(0.0, 0.0, 1.0)) -> "Pose":
        return cls(translation, (1.0, 0.0, 0.0, 0.0))

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.quaternion, scalar_first=True)

    @property
    def R(self) -> np.ndarray:
        return self.rotation.as_matrix()

    def transform(self, points: np.ndarray) -> np.ndarray:
        return points @ self.R.T + self.translation

    def to_dict(self) -> dict:
        return {"translation_m": [float(v) for v in self.translation],
                "quaternion_wxyz": [float(v) for v in self.quaternion]}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(d["translation_m"], d["quaternion_wxyz"])


def upright_rotation() -> Rotation:
    """Maps the object axis (+z) onto camera -y, i.e. standing up in the image."""
    return Rotation.from_euler("x", 90, degrees=True)


def transform_many(points: np.ndarray, rotations: np.ndarray, translations: np.ndarray) -> np.ndarray:
    """``(P, N, 3)`` camera-frame points for ``P`` poses given as ``(P,3,3)``, ``(P,3)``."""
    return np.matmul(points, np.swapaxes(rotations, 1, 2)) + translations[:, None, :]


@dataclass(frozen=True, eq=False)
class ParametricMesh:
    """Closed surface of revolution about local z.

    ``profile`` is an ``(m, 2)`` array of ``(height, radius)`` with strictly
    increasing heights, centered so that heights span ``[-H/2, H/2]``.
    """

    kind: str
    profile: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.profile, dtype=float).reshape(-1, 2)
        if len(p) < 2:
            raise GeometryError("profile needs at least two vertices")
        if np.any(np.diff(p[:, 0]) <= 0):
            raise GeometryError("profile heights must be strictly increasing")
        if np.any(p[:, 1] <= 0):
            raise GeometryError("profile radii must be positive")
        mid = 0.5 * (p[0, 0] + p[-1, 0])
        p = p - [mid, 0.0]
        object.__setattr__(self, "profile", p)

    @classmethod
    def cylinder(cls, radius: float, height: float) -> "ParametricMesh":
        if radius <= 0 or height <= 0:
            raise GeometryError("cylinder radius and height must be positive")
        return cls("cylinder", [[-height / 2, radius], [height / 2, radius]])

    @classmethod
    def lathe(cls, profile) -> "ParametricMesh":
        return cls("lathe", profile)

    @property
    def height(self) -> float:
        return float(self.profile[-1, 0] - self.profile[0, 0])

    @property
    def max_radius(self) -> float:
        return float(self.profile[:, 1].max())

    @property
    def bounding_radius(self) -> float:
        """Radius of a sphere about the origin enclosing the surface."""
        return float(np.hypot(self.profile[:, 0], self.profile[:, 1]).max())

    def diameter(self) -> float:
        """Exact maximum distance between two surface points.

        Distance between points on opposite sides of the axis is convex along
        each profile segment, so the maximum is attained at profile vertices.
        """
        h, r = self.profile[:, 0], self.profile[:, 1]
        dh = h[:, None] - h[None, :]
        rr = r[:, None] + r[None, :]
        return float(np.sqrt(dh ** 2 + rr ** 2).max())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "profile": self.profile.tolist()}

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Nearest positive ray parameter per ray in the object frame (inf if missed)."""
        o = np.broadcast_to(origins, dirs.shape)
        ox, oy, oz = o[..., 0], o[..., 1], o[..., 2]
        dx, dy, dz = dirs[..., 0], dirs[..., 1], dirs[..., 2]
        best = np.full(dirs.shape[:-1], np.inf)
        eps = 1e-12

        def keep(lam, ok):
            ok = ok & (lam > eps)
            np.minimum(best, np.where(ok, lam, np.inf), out=best)

        prof = self.profile
        for (h0, r0), (h1, r1) in zip(prof[:-1], prof[1:]):
            k = (r1 - r0) / (h1 - h0)
            a = r0 - k * h0  # radius(z) = a + k z
            A = dx * dx + dy * dy - k * k * dz * dz
            B = 2.0 * (ox * dx + oy * dy - k * dz * (a + k * oz))
            C = ox * ox + oy * oy - (a + k * oz) ** 2
            with np.errstate(invalid="ignore", divide="ignore"):
                disc = B * B - 4.0 * A * C
                sq = np.sqrt(np.maximum(disc, 0.0))
                quad = np.abs(A) > 1e-14
                lam1 = np.where(quad, (-B - sq) / (2.0 * A), -C / B)
                lam2 = np.where(quad, (-B + sq) / (2.0 * A), np.inf)
                for lam in (lam1, lam2):
                    z = oz + lam * dz
                    rad = a + k * z
                    ok = (disc >= 0) & (z >= h0) & (z <= h1) & (rad >= 0) & np.isfinite(lam)
                    keep(lam, ok)
        for h, r in (prof[0], prof[-1]):
            with np.errstate(invalid="ignore", divide="ignore"):
                lam = (h - oz) / dz
                px, py = ox + lam * dx, oy + lam * dy
                keep(lam, (px * px + py * py <= r * r) & np.isfinite(lam))
        return best

    def sample_surface(self, n_points: int) -> np.ndarray:
        """Deterministic area-stratified points on the surface.

        Points are allocated to the two caps and each lateral frustum in
        proportion to area (largest remainder) and laid out on a golden-ratio
        lattice mapped area-uniformly onto each part.
        """
        prof = self.profile
        parts = [("cap", prof[0, 0], prof[0, 1], None, None)]
        for (h0, r0), (h1, r1) in zip(prof[:-1], prof[1:]):
            parts.append(("side", h0, r0, h1, r1))
        parts.append(("cap", prof[-1, 0], prof[-1, 1], None, None))
        areas = []
        for kind, h0, r0, h1, r1 in parts:
            if kind == "cap":
                areas.append(np.pi * r0 * r0)
            else:
                areas.append(np.pi * (r0 + r1) * np.hypot(h1 - h0, r1 - r0))
        areas = np.asarray(areas)
        quota = n_points * areas / areas.sum()
        counts = np.floor(quota).astype(int)
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[: n_points - counts.sum()]] += 1

        golden = (np.sqrt(5.0) - 1.0) / 2.0
        out = []
        for (kind, h0, r0, h1, r1), m in zip(parts, counts):
            if m == 0:
                continue
            i = np.arange(m)
            u = (i + 0.5) / m
            theta = 2.0 * np.pi * ((i * golden) % 1.0)
            if kind == "cap":
                rad = r0 * np.sqrt(u)
                z = np.full(m, h0)
            else:
                # arc-length fraction w with area density proportional to radius
                if abs(r1 - r0) < 1e-15:
                    w = u
                else:
                    w = (np.sqrt(r0 * r0 + u * (r1 * r1 - r0 * r0)) - r0) / (r1 - r0)
                rad = r0 + w * (r1 - r0)
                z = h0 + w * (h1 - h0)
            out.append(np.stack([rad * np.cos(theta), rad * np.sin(theta), z], axis=1))
        return np.concatenate(out, axis=0)

    def surface_residual(self, points: np.ndarray) -> np.ndarray:
        """Distance-like residual of points from the surface (0 on the surface)."""
        rad = np.hypot(points[:, 0], points[:, 1])
        z = points[:, 2]
        prof = self.profile
        res = np.full(len(points), np.inf)
        for (h0, r0), (h1, r1) in zip(prof[:-1], prof[1:]):
            inside = (z >= h0 - 1e-12) & (z <= h1 + 1e-12)
            expect = r0 + (z - h0) * (r1 - r0) / (h1 - h0)
            res = np.where(inside, np.minimum(res, np.abs(rad - expect)), res)
        for h, r in (prof[0], prof[-1]):
            on_cap = rad <= r + 1e-12
            res = np.where(on_cap, np.minimum(res, np.abs(z - h)), res)
        return res


@dataclass(frozen=True, eq=False)
class ObjectModel:
    label: str
    points: np.ndarray  # (N, 3) meters, object frame
    diameter: float
    mesh: Optional[ParametricMesh] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(pts) < 3:
            raise GeometryError("an object model needs at least 3 points")
        if not self.diameter > 0:
            raise GeometryError("diameter must be positive")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_points(cls, label: str, points) -> "ObjectModel":
        from scipy.spatial.distance import pdist

        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) < 3:
            raise GeometryError("an object model needs at least 3 points")
        return cls(label, pts, float(pdist(pts).max()))

    def to_dict(self) -> dict:
        d = {"label": self.label, "diameter": self.diameter}
        if self.mesh is not None:
            d.update(self.mesh.to_dict())
            d["n_points"] = len(self.points)
        else:
            d["points"] = self.points.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectModel":
        if "points" in d:
            return cls.from_points(d.get("label", "object"), d["points"])
        if "profile" in d:
            mesh = ParametricMesh(d["kind"], d["profile"])
        else:
            mesh = make_mesh(d["kind"], d)
        n = int(d.get("n_points", DEFAULT_POINTS))
        if n < 100:
            raise GeometryError("n_points must be >= 100")
        return cls(d.get("label", d["kind"]), mesh.sample_surface(n), mesh.diameter(), mesh)


def make_mesh(kind: str, dims: dict) -> ParametricMesh:
    if kind == "cylinder":
        return ParametricMesh.cylinder(float(dims["radius"]), float(dims["height"]))
    if kind == "lathe":
        return ParametricMesh.lathe(dims["profile"])
    raise GeometryError(f"unknown object kind {kind!r}")


def make_object(kind: str, dims: dict, n_points: int = DEFAULT_POINTS, label: Optional[str] = None) -> ObjectModel:
    if n_points < 100:
        raise GeometryError("n_points must be >= 100")
    mesh = make_mesh(kind, dims)
    return ObjectModel(label or kind, mesh.sample_surface(n_points), mesh.diameter(), mesh)


def project_points(points_cam: np.ndarray, fx, fy, cx, cy):
    """Pinhole projection ``u = cx + fx x / z``, ``v = cy + fy y / z``."""
    z = points_cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cx + fx * points_cam[..., 0] / z
        v = cy + fy * points_cam[..., 1] / z
    return u, v


def back_project(u, v, depth, fx, fy, cx, cy) -> np.ndarray:
    u, v, depth = (np.asarray(a, dtype=float) for a in (u, v, depth))
    return np.stack([(u - cx) * depth / fx, (v - cy) * depth / fy, depth], axis=-1)


def random_rotations(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` Haar-uniform unit quaternions (w, x, y, z) with ``w >= 0``."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q[q[:, 0] < 0] *= -1.0
    return q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of (w, x, y, z) quaternion arrays, broadcasting."""
    r = Rotation.from_quat(a, scalar_first=True) * Rotation.from_quat(b, scalar_first=True)
    return r.as_quat(scalar_first=True, canonical=False)


def quats_to_matrices(q: np.ndarray) -> np.ndarray:
    return Rotation.from_quat(q, scalar_first=True).as_matrix()


def axis_angle_quats(axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    return Rotation.from_rotvec(axes * angles[:, None]).as_quat(scalar_first=True)


def poses_to_arrays(poses: Sequence[Pose]):
    t = np.stack([p.translation for p in poses])
    q = np.stack([p.quaternion for p in poses])
    return t, q
