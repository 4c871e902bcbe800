"""Particle-based 6D pose estimation by silhouette render-and-compare.

Particles are seeded from center votes and the depth likelihood volume, scored
by region and boundary IoU between the projected model point cloud and the
segmentation, then resampled and diffused until one particle's score reaches a
threshold or the iteration budget runs out.  The best-scoring pose ever seen is
returned.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import cv2
import numpy as np

from .dlv import DepthLikelihoodVolume
from .geometry import (ObjectModel, Pose, axis_angle_quats, back_project, quat_multiply,
                       quats_to_matrices, random_rotations)
from .lightfield import CameraModel
from .losses import CenterVoteField

log = logging.getLogger(__name__)

# named random sub-streams
STREAM_INIT, STREAM_RESAMPLE, STREAM_DIFFUSE = 11, 12, 13


class PoseError(ValueError):
    pass


@dataclass(frozen=True)
class LikelihoodConfig:
    eta: float = 0.5
    boundary_thickness: int = 2
    splat_radius: float = 1.5

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.boundary_thickness < 1:
            raise ValueError("boundary_thickness must be >= 1")
        if self.splat_radius < 0:
            raise ValueError("splat_radius must be >= 0")


@dataclass(frozen=True)
class DiffusionConfig:
    sigma_t: float = 0.08  # meters, per axis
    sigma_r: float = 0.4  # radians, rotation-angle std
    decay: float = 1.0  # per-iteration sigma factor; 1 keeps the noise constant

    def __post_init__(self):
        if not (self.sigma_t > 0 and self.sigma_r > 0):
            raise ValueError("diffusion sigmas must be positive")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")

    def at(self, iteration: int) -> "DiffusionConfig":
        """Noise levels used after scoring round ``iteration`` (1-based)."""
        f = self.decay ** (iteration - 1)
        return DiffusionConfig(self.sigma_t * f, self.sigma_r * f, self.decay)


@dataclass(frozen=True)
class TerminationConfig:
    weight_threshold: float = 0.7
    max_iterations: int = 60
    num_particles: int = 400

    def __post_init__(self):
        if not self.weight_threshold > 0:
            raise ValueError("weight_threshold must be positive")
        if self.max_iterations < 1 or self.num_particles < 1:
            raise ValueError("max_iterations and num_particles must be >= 1")


@dataclass(frozen=True)
class Particle:
    pose: Pose
    weight: float


class ParticleSet:
    """Structure-of-arrays particle population."""

    def __init__(self, translations, quaternions, weights=None, normalized=None):
        t = np.asarray(translations, dtype=float).reshape(-1, 3)
        q = np.asarray(quaternions, dtype=float).reshape(-1, 4)
        if len(t) == 0 or len(t) != len(q):
            raise PoseError("a particle set needs matching, nonempty translations and rotations")
        q = q / np.linalg.norm(q, axis=1, keepdims=True)
        w = np.full(len(t), 1.0 / len(t)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(t),) or not np.all(np.isfinite(w)) or np.any(w < 0):
            raise PoseError("weights must be finite, nonnegative, one per particle")
        self.translations, self.quaternions, self.weights = t, q, w
        self.normalized = bool(abs(w.sum() - 1.0) <= 1e-9) if normalized is None else normalized

    def __len__(self):
        return len(self.weights)

    @classmethod
    def from_particles(cls, particles: List[Particle]) -> "ParticleSet":
        return cls([p.pose.translation for p in particles], [p.pose.quaternion for p in particles],
                   [p.weight for p in particles])

    @property
    def particles(self) -> List[Particle]:
        return [Particle(Pose(t, q), float(w)) for t, q, w in
                zip(self.translations, self.quaternions, self.weights)]

    def pose(self, i: int) -> Pose:
        return Pose(self.translations[i], self.quaternions[i])

    def normalize(self) -> "ParticleSet":
        total = self.weights.sum()
        if total <= 0:
            raise PoseError("cannot normalize all-zero weights")
        return ParticleSet(self.translations, self.quaternions, self.weights / total, True)

    def with_weights(self, weights) -> "ParticleSet":
        return ParticleSet(self.translations, self.quaternions, weights)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-style generator keyed by ``(seed, stream, counter...)``."""
    return np.random.default_rng([int(seed), *[int(k) for k in key]])


# ---------------------------------------------------------------- masks

def _shift_or(stack: np.ndarray, radius: int, axis: int, fill: bool) -> np.ndarray:
    """OR of ``stack`` shifted by -radius..radius along ``axis``; outside = ``fill``."""
    out = stack.copy()
    n = stack.shape[axis]
    for d in range(1, radius + 1):
        if d >= n:
            if fill:
                out[...] = True
            break
        lo = [slice(None)] * stack.ndim
        hi = [slice(None)] * stack.ndim
        lo[axis], hi[axis] = slice(0, n - d), slice(d, n)
        out[tuple(lo)] |= stack[tuple(hi)]
        out[tuple(hi)] |= stack[tuple(lo)]
        if fill:
            edge_lo = [slice(None)] * stack.ndim
            edge_hi = [slice(None)] * stack.ndim
            edge_lo[axis], edge_hi[axis] = slice(0, d), slice(n - d, n)
            out[tuple(edge_lo)] = True
            out[tuple(edge_hi)] = True
    return out


def _dilate_square(mask: np.ndarray, radius: int, fill: bool = False) -> np.ndarray:
    out = _shift_or(mask, radius, mask.ndim - 1, fill)
    return _shift_or(out, radius, mask.ndim - 2, fill)


def boundary(mask: np.ndarray, thickness: int = 1) -> np.ndarray:
    """Pixels within Chebyshev distance ``thickness`` of a region transition.

    Works on a single ``(H, W)`` mask or a stack ``(P, H, W)``.  Outside the
    image counts as background, so a full-image mask has its boundary along
    the frame.
    """
    mask = np.asarray(mask, dtype=bool)
    if thickness < 1:
        return np.zeros_like(mask)
    grown = _dilate_square(mask, thickness, fill=False)
    shrunk = ~_dilate_square(~mask, thickness, fill=True)
    return grown & ~shrunk


def _disc_offsets(radius: float):
    r = int(np.floor(radius))
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if dx * dx + dy * dy <= radius * radius]


def splat_stack(u: np.ndarray, v: np.ndarray, visible: np.ndarray, height: int, width: int,
                radius: float) -> np.ndarray:
    """Rasterize ``(P, N)`` projected points as discs into ``(P, H, W)`` masks."""
    p = u.shape[0]
    masks = np.zeros((p, height, width), dtype=bool)
    xi = np.floor(u + 0.5)
    yi = np.floor(v + 0.5)
    r = int(np.floor(radius))
    # points whose disc cannot touch the image are dropped
    keep = visible & (xi >= -r) & (xi < width + r) & (yi >= -r) & (yi < height + r)
    pid = np.broadcast_to(np.arange(p)[:, None], u.shape)[keep]
    xi, yi = xi[keep].astype(np.int64), yi[keep].astype(np.int64)
    flat = masks.reshape(-1)
    for dy, dx in _disc_offsets(radius):
        x, y = xi + dx, yi + dy
        ok = (x >= 0) & (x < width) & (y >= 0) & (y < height)
        flat[(pid[ok] * height + y[ok]) * width + x[ok]] = True
    return masks


def _pixel_coords(model: ObjectModel, translations: np.ndarray, quaternions: np.ndarray,
                  cam: CameraModel):
    """Rounded pixel coordinates ``(P, N)`` of model points and a visibility flag.

    Computed in float32, which is ample for pixel rounding and halves the
    memory traffic of the batch projection.
    """
    rot = quats_to_matrices(quaternions).astype(np.float32)  # (P, 3, 3)
    p = len(rot)
    # one GEMM for the whole batch: (N, 3) @ (3, 3P) -> rows of R @ point per pose
    cols = np.ascontiguousarray(rot.transpose(2, 1, 0).reshape(3, 3 * p))
    pts = (model.points.astype(np.float32) @ cols).reshape(-1, 3, p).transpose(2, 0, 1)
    t = np.asarray(translations, dtype=np.float32).reshape(p, 1, 3)
    x, y, z = pts[..., 0] + t[..., 0], pts[..., 1] + t[..., 1], pts[..., 2] + t[..., 2]
    visible = z > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        xi = np.floor(np.float32(cam.cx) + np.float32(cam.fx) * x / z + np.float32(0.5))
        yi = np.floor(np.float32(cam.cy) + np.float32(cam.fy) * y / z + np.float32(0.5))
    visible &= np.isfinite(xi) & np.isfinite(yi)
    return xi, yi, visible


def project_silhouettes(model: ObjectModel, translations: np.ndarray, quaternions: np.ndarray,
                        cam: CameraModel, splat_radius: float = 1.5) -> np.ndarray:
    """Full-image ``(P, H, W)`` silhouettes for a batch of poses."""
    xi, yi, visible = _pixel_coords(model, translations, quaternions, cam)
    return splat_stack(xi, yi, visible, cam.image_h, cam.image_w, splat_radius)


def project_silhouette(model: ObjectModel, pose: Pose, cam: CameraModel, img=None,
                       splat_radius: float = 1.5):
    """Binary footprint of the model point cloud at ``pose``.

    Returns ``(mask, empty)``; ``empty`` flags a pose whose points all fall
    outside the image or behind the camera.
    """
    if img is not None and tuple(img) != (cam.image_h, cam.image_w):
        cam = CameraModel(cam.fx, cam.fy, cam.cx, cam.cy, cam.baseline, int(img[1]), int(img[0]))
    mask = project_silhouettes(model, pose.translation[None], pose.quaternion[None], cam, splat_radius)[0]
    return mask, not mask.any()


# ---------------------------------------------------------------- likelihood

def iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU over the last two axes; two empty sets score 0."""
    inter = np.count_nonzero(a & b, axis=(-2, -1))
    union = np.count_nonzero(a | b, axis=(-2, -1))
    return np.where(union > 0, inter / np.maximum(union, 1), 0.0)


def likelihood_weight(s_pcd: np.ndarray, s_seg: np.ndarray, boundary_pcd: np.ndarray,
                      boundary_seg: np.ndarray, cfg: LikelihoodConfig = LikelihoodConfig()):
    """``eta * IoU(regions) + (1 - eta) * IoU(boundaries)``; broadcasts over stacks."""
    if s_pcd.shape[-2:] != s_seg.shape[-2:] or boundary_pcd.shape[-2:] != boundary_seg.shape[-2:] \
            or s_pcd.shape[-2:] != boundary_pcd.shape[-2:]:
        raise ValueError("mask dimensions differ")
    w = cfg.eta * iou(s_pcd, s_seg) + (1.0 - cfg.eta) * iou(boundary_pcd, boundary_seg)
    return float(w) if np.ndim(w) == 0 else w


def segmentation_region(seg: np.ndarray) -> np.ndarray:
    """Object region of a segmentation: boolean masks pass through, label maps use classes >= 1."""
    seg = np.asarray(seg)
    return seg if seg.dtype == bool else seg >= 1


class SilhouetteScorer:
    """Scores batches of poses against one segmentation.

    Each particle is rasterized only inside its own bounding box, padded so
    that boundary bands are exact, and IoUs follow from pixel counts.  The result
    equals scoring full-image masks from ``project_silhouettes``.
    """

    def __init__(self, seg: np.ndarray, model: ObjectModel, cam: CameraModel,
                 cfg: LikelihoodConfig = LikelihoodConfig(), chunk: int = 64,
                 threads: Optional[int] = None):
        self.s_seg = segmentation_region(seg)
        if not self.s_seg.any():
            raise PoseError("segmentation has no object pixels")
        if self.s_seg.shape != (cam.image_h, cam.image_w):
            raise ValueError("segmentation size does not match the camera")
        self.b_seg = boundary(self.s_seg, cfg.boundary_thickness)
        self.model, self.cam, self.cfg, self.chunk = model, cam, cfg, chunk
        self.threads = max(1, int(threads or os.environ.get("PLENOPOSE_THREADS", "1")))
        self.offsets = _disc_offsets(cfg.splat_radius)
        self.r = int(np.floor(cfg.splat_radius))
        self.margin = m = self.r + cfg.boundary_thickness + 1
        pad = ((m, m), (m, m))
        self.seg_canvas = np.pad(self.s_seg, pad).astype(np.uint8)
        self.bnd_canvas = np.pad(self.b_seg, pad).astype(np.uint8)
        self.in_image = np.pad(np.ones(self.s_seg.shape, dtype=np.uint8), pad)
        self.disc = np.zeros((2 * self.r + 1, 2 * self.r + 1), dtype=np.uint8)
        for dy, dx in self.offsets:
            self.disc[dy + self.r, dx + self.r] = 1
        k = 2 * cfg.boundary_thickness + 1
        self.square = np.ones((k, k), dtype=np.uint8)
        self.n_seg = np.count_nonzero(self.s_seg)
        self.n_bnd = np.count_nonzero(self.b_seg)

    def _project(self, t, q):
        xi, yi, ok = _pixel_coords(self.model, t, q, self.cam)
        h, w, r = self.cam.image_h, self.cam.image_w, self.r
        ok &= (xi >= -r) & (xi < w + r) & (yi >= -r) & (yi < h + r)
        xi = np.where(ok, xi, 0).astype(np.int64) + self.margin
        yi = np.where(ok, yi, 0).astype(np.int64) + self.margin
        return xi, yi, ok

    def _score_chunk(self, xi, yi, ok):
        m, r = self.margin, self.r
        hc, wc = self.seg_canvas.shape
        eta = self.cfg.eta
        out = np.zeros(len(xi))
        for i in range(len(xi)):
            sel = ok[i]
            if not sel.any():
                continue  # empty silhouette scores 0
            xs, ys = xi[i][sel], yi[i][sel]
            x0, y0 = max(int(xs.min()) - m - r, 0), max(int(ys.min()) - m - r, 0)
            x1, y1 = min(int(xs.max()) + m + r + 1, wc), min(int(ys.max()) + m + r + 1, hc)
            crop = np.zeros((y1 - y0, x1 - x0), dtype=np.uint8)
            crop[ys - y0, xs - x0] = 1
            crop = cv2.dilate(crop, self.disc)
            crop &= self.in_image[y0:y1, x0:x1]
            n_pcd = cv2.countNonZero(crop)
            if n_pcd == 0:
                continue
            grown = cv2.dilate(crop, self.square)
            shrunk = cv2.erode(crop, self.square, borderType=cv2.BORDER_CONSTANT, borderValue=0)
            bnd = (grown - shrunk) & self.in_image[y0:y1, x0:x1]
            inter = cv2.countNonZero(crop & self.seg_canvas[y0:y1, x0:x1])
            region = inter / (n_pcd + self.n_seg - inter)
            n_b = cv2.countNonZero(bnd)
            inter_b = cv2.countNonZero(bnd & self.bnd_canvas[y0:y1, x0:x1])
            union_b = n_b + self.n_bnd - inter_b
            out[i] = eta * region + (1.0 - eta) * (inter_b / union_b if union_b else 0.0)
        return out

    def __call__(self, translations: np.ndarray, quaternions: np.ndarray) -> np.ndarray:
        translations = np.asarray(translations, dtype=float).reshape(-1, 3)
        quaternions = np.asarray(quaternions, dtype=float).reshape(-1, 4)
        n = len(translations)
        out = np.empty(n)
        bounds = [np.arange(i, min(n, i + self.chunk)) for i in range(0, n, self.chunk)]

        def work(idx):
            out[idx] = self._score_chunk(*self._project(translations[idx], quaternions[idx]))

        if self.threads == 1:
            for b in bounds:
                work(b)
        else:
            with ThreadPoolExecutor(self.threads) as pool:
                list(pool.map(work, bounds))
        return out


# ---------------------------------------------------------------- sampling

def init_samples(votes: CenterVoteField, dlv: DepthLikelihoodVolume, cam: CameraModel, n: int,
                 rng_seed: int = 0) -> ParticleSet:
    """Draw ``n`` particles with probability proportional to vote confidence times depth likelihood.

    Each draw picks a vote endpoint ``(u, v)`` and a depth plane ``d`` and is
    back-projected through the pinhole model; orientations are Haar-uniform.
    """
    if len(votes) == 0:
        raise PoseError("no center votes")
    ends = votes.endpoints
    px = np.floor(ends + 0.5).astype(int)
    inside = dlv.contains(px[:, 0], px[:, 1])
    if not inside.any():
        raise PoseError("no vote endpoint falls inside the depth likelihood volume")
    ends, px, conf = ends[inside], px[inside], votes.confidences[inside]
    joint = conf[:, None] * dlv.rows(px[:, 0], px[:, 1])
    total = joint.sum()
    if not total > 0:
        raise PoseError("vote confidences and depth likelihoods give an all-zero distribution")
    cdf = np.cumsum(joint.ravel() / total)
    cdf[-1] = 1.0
    # particle i draws one uniform and four normals from its own stream
    draws = [stream(rng_seed, STREAM_INIT, i) for i in range(n)]
    u = np.array([g.random() for g in draws])
    quats = np.concatenate([random_rotations(g, 1) for g in draws])
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    vote_idx, plane_idx = np.divmod(idx, joint.shape[1])
    trans = back_project(ends[vote_idx, 0], ends[vote_idx, 1], dlv.depths[plane_idx],
                         cam.fx, cam.fy, cam.cx, cam.cy)
    return ParticleSet(trans, quats)


def systematic_indices(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(weights)
    cdf = np.cumsum(weights / weights.sum())
    cdf[-1] = 1.0
    positions = (rng.random() + np.arange(n)) / n
    return np.minimum(np.searchsorted(cdf, positions, side="right"), n - 1)


def resample(ps: ParticleSet, rng) -> ParticleSet:
    """Systematic resampling to uniform weights; particle count is preserved."""
    rng = np.random.default_rng(rng)
    if not ps.weights.sum() > 0:
        raise PoseError("cannot resample all-zero weights")
    idx = systematic_indices(ps.weights, rng)
    return ParticleSet(ps.translations[idx], ps.quaternions[idx])


def particle_normals(seed: int, key, n: int, k: int) -> np.ndarray:
    """``(n, k)`` standard normals, row ``i`` from its own stream ``(seed, *key, i)``.

    Row ``i`` depends only on the particle index, never on how many other
    particles there are or in which order they are processed.
    """
    return np.stack([stream(seed, *key, i).standard_normal(k) for i in range(n)]) if n else \
        np.empty((0, k))


def diffuse(ps: ParticleSet, cfg: DiffusionConfig, rng) -> ParticleSet:
    """Gaussian translation noise plus a left-composed random rotation per particle.

    ``rng`` is a generator (or seed) shared by all particles, or an ``(n, 7)``
    array of standard normals, one row per particle.
    """
    n = len(ps)
    if isinstance(rng, np.ndarray) and rng.ndim == 2:
        if rng.shape != (n, 7):
            raise ValueError("need one row of 7 normals per particle")
        z = rng
    else:
        z = np.random.default_rng(rng).standard_normal((n, 7))
    trans = ps.translations + cfg.sigma_t * z[:, :3]
    axes = z[:, 3:6].copy()
    norm = np.linalg.norm(axes, axis=1, keepdims=True)
    axes = np.where(norm > 0, axes / np.where(norm > 0, norm, 1.0), [1.0, 0.0, 0.0])
    angles = np.abs(cfg.sigma_r * z[:, 6])
    q = quat_multiply(axis_angle_quats(axes, angles), ps.quaternions)
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return ParticleSet(trans, q, ps.weights.copy())


class EstimateResult(NamedTuple):
    pose: Pose
    weight: float
    iterations: int


def estimate(seg: np.ndarray, votes: CenterVoteField, dlv: DepthLikelihoodVolume, model: ObjectModel,
             cam: CameraModel, like_cfg: LikelihoodConfig = LikelihoodConfig(),
             diff_cfg: DiffusionConfig = DiffusionConfig(),
             term_cfg: TerminationConfig = TerminationConfig(), rng_seed: int = 0,
             init: Optional[ParticleSet] = None, threads: Optional[int] = None) -> EstimateResult:
    """Iterative likelihood reweighting for one object.

    Each iteration scores every particle, stops if the best raw score reaches
    ``weight_threshold``, and otherwise resamples on normalized scores and
    diffuses.  Returns the best-scoring pose seen, its score and the number of
    scoring rounds.
    """
    scorer = SilhouetteScorer(seg, model, cam, like_cfg, threads=threads)
    ps = init if init is not None else init_samples(votes, dlv, cam, term_cfg.num_particles, rng_seed)

    best_w, best_pose = -1.0, None
    for it in range(1, term_cfg.max_iterations + 1):
        raw = scorer(ps.translations, ps.quaternions)
        k = int(np.argmax(raw))
        if raw[k] > best_w:
            best_w, best_pose = float(raw[k]), ps.pose(k)
        if raw[k] >= term_cfg.weight_threshold or it == term_cfg.max_iterations:
            break
        if raw.sum() > 0:
            ps = ps.with_weights(raw).normalize()
        else:
            log.warning("iteration %d: every particle scored 0, resampling uniformly", it)
            ps = ps.with_weights(np.full(len(ps), 1.0 / len(ps)))
        ps = resample(ps, stream(rng_seed, STREAM_RESAMPLE, it))
        ps = diffuse(ps, diff_cfg.at(it), particle_normals(rng_seed, (STREAM_DIFFUSE, it), len(ps), 7))
    return EstimateResult(best_pose, best_w, it)
