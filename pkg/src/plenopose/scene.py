"""Synthetic desk-scale scenes: light fields, segmentation, votes and ground truth.

Transparency is rendered as a proxy, not by ray-traced refraction: object
pixels alpha-blend the background seen straight through the object with a
faint surface texture that moves at the object's own disparity, plus
view-dependent specular sparkles.  Silhouettes and depths come from exact
ray intersection with the parametric surfaces.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence

import numpy as np

from .geometry import DEFAULT_POINTS, ObjectModel, Pose, make_object, project_points
from .lightfield import CameraModel, LightField4D, depth_to_disparity
from .losses import CenterVoteField

BACKGROUND, TRANSPARENT, BOUNDARY = 0, 1, 2


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class BackgroundSpec:
    depth: float = 0.8
    texture_seed: int = 0
    contrast: float = 0.12
    num_waves: int = 32
    # spatial frequency band, cycles per pixel
    min_frequency: float = 0.01
    max_frequency: float = 0.025  # keeps bilinear shear error under 1e-3


@dataclass(frozen=True, eq=False)
class SceneObject:
    kind: str
    dims: dict
    pose: Pose
    label: str = "object"
    n_points: int = DEFAULT_POINTS

    @cached_property
    def _model(self) -> ObjectModel:
        return make_object(self.kind, self.dims, self.n_points, self.label)

    def model(self) -> ObjectModel:
        return self._model


@dataclass(frozen=True)
class RenderOptions:
    noise_std: float = 0.0
    sparkle_rate: float = 0.0
    sparkle_gain: float = 0.5
    alpha: float = 0.35
    seed: int = 0


@dataclass(frozen=True)
class VoteOptions:
    offset_noise_std: float = 0.0
    profile: str = "constant"  # constant | residual | distance
    value: float = 1.0
    tau: float = 0.5
    scale: float = 40.0
    seed: int = 0


@dataclass(frozen=True)
class SceneSpec:
    camera: CameraModel
    angular_h: int = 5
    angular_w: int = 5
    background: BackgroundSpec = BackgroundSpec()
    objects: Sequence[SceneObject] = ()
    render: RenderOptions = RenderOptions()
    votes: VoteOptions = VoteOptions()

    def __post_init__(self):
        if self.angular_h % 2 == 0 or self.angular_w % 2 == 0:
            raise SceneError("angular dims must be odd")
        if self.background.depth <= 0:
            raise SceneError("background depth must be positive")
        labels = [o.label for o in self.objects]
        if len(set(labels)) != len(labels):
            raise SceneError("object labels must be unique")
        for obj in self.objects:
            mesh = obj.model().mesh
            z = obj.pose.translation[2]
            if z - mesh.bounding_radius <= 0:
                raise SceneError(f"object {obj.label!r} reaches behind the camera")
            if z + mesh.bounding_radius >= self.background.depth:
                raise SceneError(f"object {obj.label!r} is not in front of the background")

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return {
            "camera": self.camera.to_dict(),
            "angular": {"h": self.angular_h, "w": self.angular_w},
            "background": asdict(self.background),
            "objects": [{"kind": o.kind, "dims": o.dims, "label": o.label, "n_points": o.n_points,
                         "pose": o.pose.to_dict()} for o in self.objects],
            "render": asdict(self.render),
            "votes": asdict(self.votes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        ang = d.get("angular", {})
        objects = [SceneObject(o["kind"], o["dims"], Pose.from_dict(o["pose"]), o.get("label", o["kind"]),
                               int(o.get("n_points", DEFAULT_POINTS))) for o in d.get("objects", [])]
        return cls(
            camera=CameraModel.from_dict(d["camera"]),
            angular_h=int(ang.get("h", 5)),
            angular_w=int(ang.get("w", 5)),
            background=BackgroundSpec(**d.get("background", {})),
            objects=tuple(objects),
            render=RenderOptions(**d.get("render", {})),
            votes=VoteOptions(**d.get("votes", {})),
        )


@dataclass(frozen=True, eq=False)
class RenderOutputs:
    lightfield: LightField4D
    seg: np.ndarray  # (H, W) class indices
    votes: List[CenterVoteField]
    gt_poses: List[Pose]
    gt_center_px: np.ndarray  # (n_objects, 2)
    gt_depth: np.ndarray  # center-view depth map, meters
    models: List[ObjectModel] = field(default_factory=list)
    object_ids: Optional[np.ndarray] = None  # center-view object index per pixel, -1 for none


class BackgroundTexture:
    """Band-limited noise: a seeded sum of plane waves per channel, evaluated exactly."""

    def __init__(self, spec: BackgroundSpec):
        rng = np.random.default_rng(spec.texture_seed)
        n = spec.num_waves
        freq = rng.uniform(spec.min_frequency, spec.max_frequency, size=(3, n))
        angle = rng.uniform(0, 2 * np.pi, size=(3, n))
        self.kx = 2 * np.pi * freq * np.cos(angle)
        self.ky = 2 * np.pi * freq * np.sin(angle)
        self.phase = rng.uniform(0, 2 * np.pi, size=(3, n))
        amp = rng.uniform(0.5, 1.0, size=(3, n))
        # per-channel standard deviation equals the contrast
        self.amp = amp * spec.contrast * np.sqrt(2.0 / (amp ** 2).sum(axis=1, keepdims=True))
        self.mean = np.array([0.45, 0.5, 0.55])

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape + (3,))
        for c in range(3):
            arg = (x[..., None] * self.kx[c] + y[..., None] * self.ky[c] + self.phase[c])
            out[..., c] = self.mean[c] + (self.amp[c] * np.cos(arg)).sum(axis=-1)
        return out

    def grid(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Texture on the ``(len(y), len(x))`` grid spanned by 1-D coordinates.

        Each wave factors into a row term times a column term, so the sum
        over waves becomes one complex matrix product per channel.
        """
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        out = np.empty((len(y), len(x), 3))
        for c in range(3):
            rows = np.exp(1j * (y[:, None] * self.ky[c] + self.phase[c]))
            cols = self.amp[c] * np.exp(1j * x[:, None] * self.kx[c])
            out[..., c] = self.mean[c] + (rows @ cols.T).real
        return out


def _object_texture(points_obj: np.ndarray) -> np.ndarray:
    """Faint striped glass tint as a function of object-frame surface position."""
    theta = np.arctan2(points_obj[..., 1], points_obj[..., 0])
    rad = np.hypot(points_obj[..., 0], points_obj[..., 1])
    z = points_obj[..., 2]
    pattern = 0.5 * np.sin(2 * np.pi * z / 0.025) + 0.5 * np.sin(2 * np.pi * rad * theta / 0.03)
    base = np.array([0.75, 0.85, 0.9])
    return base + 0.15 * pattern[..., None]


def _view_origin(cam: CameraModel, s_off: float, t_off: float) -> np.ndarray:
    return np.array([-cam.baseline * s_off, -cam.baseline * t_off, 0.0])


def _object_bbox(obj: SceneObject, cam: CameraModel, origin: np.ndarray, margin: int = 3):
    """Pixel box covering an object's bounding sphere as seen from ``origin``."""
    mesh = obj.model().mesh
    c = obj.pose.translation - origin
    r = mesh.bounding_radius
    corners = c + r * np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    u, v = project_points(corners, cam.fx, cam.fy, cam.cx, cam.cy)
    x0 = max(0, int(np.floor(u.min())) - margin)
    x1 = min(cam.image_w, int(np.ceil(u.max())) + margin + 1)
    y0 = max(0, int(np.floor(v.min())) - margin)
    y1 = min(cam.image_h, int(np.ceil(v.max())) + margin + 1)
    return x0, x1, y0, y1


def ray_cast(spec: SceneSpec, s_off: float = 0.0, t_off: float = 0.0):
    """Depth (inf where missed), object index (-1) and object-frame hit points for one view."""
    cam = spec.camera
    h, w = cam.image_h, cam.image_w
    depth = np.full((h, w), np.inf)
    ids = np.full((h, w), -1, dtype=int)
    hits = np.zeros((h, w, 3))
    origin = _view_origin(cam, s_off, t_off)
    for i, obj in enumerate(spec.objects):
        x0, x1, y0, y1 = _object_bbox(obj, cam, origin)
        if x1 <= x0 or y1 <= y0:
            continue
        ys, xs = np.mgrid[y0:y1, x0:x1].astype(float)
        dirs = np.stack([(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy, np.ones_like(xs)], axis=-1)
        R = obj.pose.R
        o_obj = R.T @ (origin - obj.pose.translation)
        d_obj = dirs @ R  # R^T d per ray
        lam = obj.model().mesh.intersect(o_obj, d_obj)
        sub = depth[y0:y1, x0:x1]
        closer = lam < sub  # dirs have unit z, so lam is depth
        sub[closer] = lam[closer]
        ids[y0:y1, x0:x1][closer] = i
        hits[y0:y1, x0:x1][closer] = o_obj + lam[closer][:, None] * d_obj[closer]
    return depth, ids, hits


def render_lightfield(spec: SceneSpec) -> LightField4D:
    cam = spec.camera
    h, w = cam.image_h, cam.image_w
    cs, ct = (spec.angular_w - 1) // 2, (spec.angular_h - 1) // 2
    texture = BackgroundTexture(spec.background)
    d_bg = depth_to_disparity(cam, spec.background.depth)
    xs, ys = np.arange(w, dtype=float), np.arange(h, dtype=float)
    opts = spec.render

    data = np.empty((h, w, spec.angular_h, spec.angular_w, 3))
    for t in range(spec.angular_h):
        for s in range(spec.angular_w):
            so, to = s - cs, t - ct
            img = texture.grid(xs - d_bg * so, ys - d_bg * to)
            if spec.objects:
                depth, ids, hits = ray_cast(spec, so, to)
                obj = ids >= 0
                if obj.any():
                    img[obj] = (1 - opts.alpha) * img[obj] + opts.alpha * _object_texture(hits[obj])
                    if opts.sparkle_rate > 0:
                        rng = np.random.default_rng([opts.seed, 1, t, s])
                        sparkle = obj & (rng.random((h, w)) < opts.sparkle_rate)
                        img[sparkle] += opts.sparkle_gain
            if opts.noise_std > 0:
                rng = np.random.default_rng([opts.seed, 2, t, s])
                img += rng.normal(0.0, opts.noise_std, size=img.shape)
            data[:, :, t, s] = np.clip(img, 0.0, 1.0)
    return LightField4D(data)


def boundary_band(mask: np.ndarray, thickness: int = 1) -> np.ndarray:
    from .pose import boundary

    return boundary(mask, thickness)


def render_segmentation(spec: SceneSpec) -> np.ndarray:
    """Three-class labels: transparent silhouettes with a 2-px boundary band."""
    depth, _, _ = ray_cast(spec)
    sil = np.isfinite(depth)
    labels = np.zeros(sil.shape, dtype=np.uint8)
    labels[sil] = TRANSPARENT
    labels[boundary_band(sil, 1)] = BOUNDARY
    return labels


def gt_center_pixels(spec: SceneSpec) -> np.ndarray:
    cam = spec.camera
    if not spec.objects:
        return np.zeros((0, 2))
    t = np.stack([o.pose.translation for o in spec.objects])
    u, v = project_points(t, cam.fx, cam.fy, cam.cx, cam.cy)
    return np.stack([u, v], axis=1)


def make_center_votes(seg: np.ndarray, gt_center_px, offset_noise_std: float = 0.0,
                      confidence_profile: str = "constant", rng=None, value: float = 1.0,
                      tau: float = 0.5, scale: float = 40.0) -> CenterVoteField:
    """Oracle center votes from every transparent pixel of ``seg``.

    ``seg`` is either a boolean region or a three-class label map.  Profiles:
    ``constant`` (every vote gets ``value``), ``residual`` (``exp(-tau |noise|)``,
    the exact confidence target for the realized residual) and ``distance``
    (``exp(-|c_p - g| / scale)``).
    """
    region = seg if seg.dtype == bool else seg == TRANSPARENT
    ys, xs = np.nonzero(region)
    if len(xs) == 0:
        raise SceneError("no transparent pixels to vote from")
    rng = np.random.default_rng(rng)
    pixels = np.stack([xs, ys], axis=1).astype(float)
    g = np.asarray(gt_center_px, dtype=float)
    noise = rng.normal(0.0, offset_noise_std, size=pixels.shape) if offset_noise_std > 0 else np.zeros_like(pixels)
    offsets = g - pixels + noise
    if confidence_profile == "constant":
        conf = np.full(len(pixels), value)
    elif confidence_profile == "residual":
        conf = np.exp(-tau * np.linalg.norm(noise, axis=1))
    elif confidence_profile == "distance":
        conf = np.exp(-np.linalg.norm(pixels - g, axis=1) / scale)
    else:
        raise SceneError(f"unknown confidence profile {confidence_profile!r}")
    return CenterVoteField(pixels, offsets, conf)


def render(spec: SceneSpec) -> RenderOutputs:
    """Everything the pipeline consumes for one scene."""
    lf = render_lightfield(spec)
    depth, ids, _ = ray_cast(spec)
    sil = np.isfinite(depth)
    seg = np.zeros(sil.shape, dtype=np.uint8)
    seg[sil] = TRANSPARENT
    seg[boundary_band(sil, 1)] = BOUNDARY
    centers = gt_center_pixels(spec)
    vote_opts = spec.votes
    votes = []
    for i, _ in enumerate(spec.objects):
        region = (ids == i) & (seg == TRANSPARENT)
        votes.append(make_center_votes(region, centers[i], vote_opts.offset_noise_std, vote_opts.profile,
                                       np.random.default_rng([vote_opts.seed, i]), vote_opts.value,
                                       vote_opts.tau, vote_opts.scale))
    gt_depth = np.where(sil, depth, spec.background.depth)
    return RenderOutputs(lf, seg, votes, [o.pose for o in spec.objects], centers, gt_depth,
                         [o.model() for o in spec.objects], ids)


def default_camera(size: int = 224, fx: float = 500.0, baseline: float = 0.001) -> CameraModel:
    """Square desk-scale camera with a 0.1 cm sub-aperture baseline."""
    c = size / 2.0
    return CameraModel(fx, fx, c, c, baseline, size, size)


def planted_cylinder_spec(depth: float = 0.5, radius: float = 0.04, height: float = 0.12,
                          rotation=None, seed: int = 0, camera: Optional[CameraModel] = None,
                          background_depth: float = 0.8, sparkle_rate: float = 0.0,
                          noise_std: float = 0.0, n_points: int = DEFAULT_POINTS) -> SceneSpec:
    """An upright cylinder on the optical axis in front of a textured plane."""
    from .geometry import upright_rotation

    rot = upright_rotation() if rotation is None else rotation
    pose = Pose.from_rotation(rot, [0.0, 0.0, depth])
    return SceneSpec(
        camera=camera or default_camera(),
        background=BackgroundSpec(depth=background_depth, texture_seed=seed),
        objects=(SceneObject("cylinder", {"radius": radius, "height": height}, pose, "cylinder", n_points),),
        render=RenderOptions(seed=seed, sparkle_rate=sparkle_rate, noise_std=noise_std),
        votes=VoteOptions(seed=seed),
    )


def planted_plane_spec(depth: float = 0.5, seed: int = 0, camera: Optional[CameraModel] = None,
                       contrast: float = 0.12, **background) -> SceneSpec:
    return SceneSpec(camera=camera or default_camera(),
                     background=BackgroundSpec(depth=depth, texture_seed=seed, contrast=contrast, **background))
