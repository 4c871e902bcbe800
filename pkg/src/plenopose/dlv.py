"""Depth likelihood volumes from plane-sweep matching across sub-aperture views.

For every pixel of a region of interest and every candidate depth plane, each
non-center view is resampled at the disparity of that plane and compared with
the center view on color and on Sobel gradient magnitude.  Costs are averaged
over the views that stay in frame and mapped to a per-pixel distribution over
depth by ``exp(-cost / cost_scale)`` followed by normalization.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .lightfield import CameraModel, LightField4D, depth_to_disparity

LUMA = np.array([0.299, 0.587, 0.114])


class DlvError(ValueError):
    pass


@dataclass(frozen=True)
class DlvConfig:
    depth_min: float = 0.3
    depth_max: float = 1.0
    num_planes: int = 64
    intensity_weight: float = 1.0
    gradient_weight: float = 0.5
    cost_scale: float = 0.1
    # (s, t) pairs; None means every view except the center
    views: Optional[Tuple[Tuple[int, int], ...]] = None

    def __post_init__(self):
        if not (0 < self.depth_min < self.depth_max):
            raise DlvError("need 0 < depth_min < depth_max")
        if self.num_planes < 1:
            raise DlvError("num_planes must be >= 1")
        if self.intensity_weight < 0 or self.gradient_weight < 0:
            raise DlvError("cost weights must be >= 0")
        if self.intensity_weight + self.gradient_weight <= 0:
            raise DlvError("at least one cost weight must be positive")
        if not self.cost_scale > 0:
            raise DlvError("cost_scale must be positive")
        if self.views is not None:
            object.__setattr__(self, "views", tuple(tuple(int(i) for i in v) for v in self.views))

    def plane_depths(self) -> np.ndarray:
        """Depths uniform in inverse depth, strictly increasing."""
        inv = np.linspace(1.0 / self.depth_min, 1.0 / self.depth_max, self.num_planes)
        return 1.0 / inv

    def to_dict(self) -> dict:
        d = asdict(self)
        d["views"] = None if self.views is None else [list(v) for v in self.views]
        return d


@dataclass(frozen=True, eq=False)
class DepthLikelihoodVolume:
    roi: Tuple[int, int, int, int]  # x, y, w, h
    depths: np.ndarray
    values: np.ndarray  # (h, w, K)
    config: DlvConfig = DlvConfig()

    def _index(self, u: int, v: int):
        x0, y0, w, h = self.roi
        if not (x0 <= u < x0 + w and y0 <= v < y0 + h):
            raise IndexError(f"pixel ({u}, {v}) outside roi {self.roi}")
        return v - y0, u - x0

    def contains(self, u, v) -> np.ndarray:
        x0, y0, w, h = self.roi
        u, v = np.asarray(u), np.asarray(v)
        return (u >= x0) & (u < x0 + w) & (v >= y0) & (v < y0 + h)

    def rows(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Vectorized likelihood rows for integer pixel arrays (all inside the roi)."""
        x0, y0, _, _ = self.roi
        return self.values[np.asarray(v) - y0, np.asarray(u) - x0]


def luminance(img: np.ndarray) -> np.ndarray:
    return img @ LUMA


def gradient_magnitude(img: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude of the luminance, in intensity per pixel."""
    lum = luminance(img)
    gx = ndimage.sobel(lum, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(lum, axis=0, mode="nearest") / 8.0
    return np.hypot(gx, gy)


def texture_contrast(img: np.ndarray) -> np.ndarray:
    """Local luminance range (max - min) over a 3x3 neighborhood."""
    lum = luminance(img)
    return ndimage.maximum_filter(lum, 3, mode="nearest") - ndimage.minimum_filter(lum, 3, mode="nearest")


def _default_views(lf: LightField4D) -> Tuple[Tuple[int, int], ...]:
    return tuple((s, t) for t in range(lf.angular_h) for s in range(lf.angular_w)
                 if (s, t) != (lf.center_s, lf.center_t))


class _PlaneSweep:
    """Padded per-view feature stacks so shifted samples are plain slices."""

    def __init__(self, lf: LightField4D, cam: CameraModel, roi, cfg: DlvConfig):
        self.lf, self.cam, self.cfg = lf, cam, cfg
        x0, y0, w, h = roi
        self.roi = roi
        self.views = cfg.views if cfg.views is not None else _default_views(lf)
        for s, t in self.views:
            if not (0 <= s < lf.angular_w and 0 <= t < lf.angular_h):
                raise DlvError(f"view ({s}, {t}) outside the angular grid")
            if (s, t) == (lf.center_s, lf.center_t):
                raise DlvError("the center view cannot be a matching view")
        max_disp = depth_to_disparity(cam, cfg.depth_min)
        max_off = max(lf.center_s, lf.center_t)
        self.pad = int(math.ceil(max_disp * max_off)) + 2

        # channel-first float32 stacks: contiguous slices, half the memory traffic
        center = lf.center_view()
        self.center = np.concatenate([
            np.moveaxis(center[y0:y0 + h, x0:x0 + w], -1, 0),
            gradient_magnitude(center)[None, y0:y0 + h, x0:x0 + w]]).astype(np.float32)

        # only the window reachable by any shift is kept, padded with NaN
        P = self.pad
        ya, yb = max(0, y0 - P), min(lf.spatial_h, y0 + h + P)
        xa, xb = max(0, x0 - P), min(lf.spatial_w, x0 + w + P)
        self.origin = (y0 - P, x0 - P)  # image coords of padded[0, 0]
        self.features = {}
        for s, t in self.views:
            view = lf.data[:, :, t, s]
            feat = np.full((4, h + 2 * P, w + 2 * P), np.nan, dtype=np.float32)
            oy, ox = ya - self.origin[0], xa - self.origin[1]
            feat[:3, oy:oy + yb - ya, ox:ox + xb - xa] = np.moveaxis(view[ya:yb, xa:xb], -1, 0)
            feat[3, oy:oy + yb - ya, ox:ox + xb - xa] = gradient_magnitude(view)[ya:yb, xa:xb]
            self.features[(s, t)] = feat

    def _sample(self, feat: np.ndarray, dx: float, dy: float) -> np.ndarray:
        """``feat`` at roi pixel ``(x + dx, y + dy)``; NaN where out of frame."""
        _, _, w, h = self.roi
        ix, fx = math.floor(dx), dx - math.floor(dx)
        iy, fy = math.floor(dy), dy - math.floor(dy)
        by, bx = self.pad + iy, self.pad + ix

        def sl(oy, ox):
            return feat[:, by + oy:by + oy + h, bx + ox:bx + ox + w]

        fx, fy = np.float32(fx), np.float32(fy)
        one = np.float32(1.0)
        if fx == 0.0 and fy == 0.0:
            return sl(0, 0)
        if fy == 0.0:
            return (one - fx) * sl(0, 0) + fx * sl(0, 1)
        if fx == 0.0:
            return (one - fy) * sl(0, 0) + fy * sl(1, 0)
        return ((one - fy) * ((one - fx) * sl(0, 0) + fx * sl(0, 1))
                + fy * ((one - fx) * sl(1, 0) + fx * sl(1, 1)))

    def view_cost(self, view, depth: float) -> np.ndarray:
        """Per-pixel cost of one view at one depth; NaN where the sample is invalid."""
        s, t = view
        disp = depth_to_disparity(self.cam, depth)
        shifted = self._sample(self.features[view], disp * (s - self.lf.center_s),
                               disp * (t - self.lf.center_t))
        diff = np.abs(shifted - self.center)
        cost = (diff[0] + diff[1] + diff[2]) * np.float32(self.cfg.intensity_weight / 3.0)
        if self.cfg.gradient_weight:
            cost += np.float32(self.cfg.gradient_weight) * diff[3]
        return cost

    def plane_cost(self, depth: float) -> np.ndarray:
        """View-averaged cost at one depth; NaN where no view is valid."""
        _, _, w, h = self.roi
        total = np.zeros((h, w))
        count = np.zeros((h, w))
        for view in self.views:
            c = self.view_cost(view, depth)
            ok = c == c  # NaN marks an invalid sample
            total += np.where(ok, c, 0.0)
            count += ok
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(count > 0, total / np.maximum(count, 1), np.nan)


def _check_roi(lf: LightField4D, roi) -> Tuple[int, int, int, int]:
    x0, y0, w, h = (int(v) for v in roi)
    if w < 1 or h < 1 or x0 < 0 or y0 < 0 or x0 + w > lf.spatial_w or y0 + h > lf.spatial_h:
        raise DlvError(f"roi {roi} not inside the {lf.spatial_w}x{lf.spatial_h} image")
    return x0, y0, w, h


def cost_T(lf: LightField4D, cam: CameraModel, view, depth: float, x: int, y: int,
           cfg: DlvConfig = DlvConfig()) -> float:
    """Matching cost of one view at one depth for one center-view pixel.

    Returns NaN when the shifted sample falls out of frame.
    """
    sweep = _PlaneSweep(lf, cam, _check_roi(lf, (x, y, 1, 1)),
                        DlvConfig(**{**cfg.to_dict(), "views": (tuple(view),)}))
    return float(sweep.view_cost(tuple(view), depth)[0, 0])


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = int(os.environ.get("PLENOPOSE_THREADS", "1"))
    return max(1, int(threads))


def raw_costs(lf: LightField4D, cam: CameraModel, roi, cfg: DlvConfig = DlvConfig(),
              threads: Optional[int] = None) -> np.ndarray:
    """``(h, w, K)`` view-averaged matching costs (NaN where no view is valid)."""
    roi = _check_roi(lf, roi)
    sweep = _PlaneSweep(lf, cam, roi, cfg)
    depths = cfg.plane_depths()
    out = np.empty((roi[3], roi[2], len(depths)))

    def work(k):
        out[:, :, k] = sweep.plane_cost(float(depths[k]))

    n = resolve_threads(threads)
    if n == 1:
        for k in range(len(depths)):
            work(k)
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            list(pool.map(work, range(len(depths))))
    return out


def costs_to_likelihood(raw: np.ndarray, cost_scale: float) -> np.ndarray:
    """Per-pixel ``exp(-cost / cost_scale)`` normalized over the last axis.

    Planes without any valid view get the pixel's worst observed cost; a pixel
    with no valid plane at all gets a uniform row.
    """
    raw = raw.copy()
    missing = np.isnan(raw)
    if missing.any():
        all_missing = missing.all(axis=-1)
        worst = np.where(all_missing, 0.0, np.nanmax(np.where(missing, -np.inf, raw), axis=-1))
        raw[missing] = np.broadcast_to(worst[..., None], raw.shape)[missing]
    logits = -(raw - raw.min(axis=-1, keepdims=True)) / cost_scale
    lik = np.exp(logits)
    lik /= lik.sum(axis=-1, keepdims=True)
    return lik


def build_dlv(lf: LightField4D, cam: CameraModel, roi, cfg: DlvConfig = DlvConfig(),
              threads: Optional[int] = None) -> DepthLikelihoodVolume:
    roi = _check_roi(lf, roi)
    raw = raw_costs(lf, cam, roi, cfg, threads)
    return DepthLikelihoodVolume(roi, cfg.plane_depths(), costs_to_likelihood(raw, cfg.cost_scale), cfg)


def pixel_likelihood(dlv: DepthLikelihoodVolume, u: int, v: int) -> np.ndarray:
    r, c = dlv._index(u, v)
    return dlv.values[r, c]


def argmax_depth(dlv: DepthLikelihoodVolume, u: int, v: int) -> float:
    """Most likely plane depth; ties go to the nearer plane."""
    return float(dlv.depths[int(np.argmax(pixel_likelihood(dlv, u, v)))])


def argmax_depth_map(dlv: DepthLikelihoodVolume) -> np.ndarray:
    return dlv.depths[np.argmax(dlv.values, axis=-1)]


def plane_spacing(depths: np.ndarray, depth: float) -> float:
    """Gap between the planes bracketing ``depth``."""
    if len(depths) < 2:
        return 0.0
    k = int(np.clip(np.searchsorted(depths, depth), 1, len(depths) - 1))
    return float(depths[k] - depths[k - 1])


def store_dlv(dlv: DepthLikelihoodVolume, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "roi": list(dlv.roi),
        "depths": [float(d) for d in dlv.depths],
        "shape": list(dlv.values.shape),
        "config": dlv.config.to_dict(),
        "dtype": "<f4",
    }
    (path / "dlv.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    dlv.values.astype("<f4").tofile(path / "dlv.f32")
    return path


def load_dlv(path) -> DepthLikelihoodVolume:
    path = Path(path)
    meta = json.loads((path / "dlv.json").read_text())
    values = np.fromfile(path / "dlv.f32", dtype="<f4").astype(float)
    shape = tuple(meta["shape"])
    if values.size != int(np.prod(shape)):
        raise DlvError(f"dlv.f32 holds {values.size} values, metadata expects {shape}")
    cfg = meta["config"]
    if cfg.get("views") is not None:
        cfg["views"] = tuple(tuple(v) for v in cfg["views"])
    return DepthLikelihoodVolume(tuple(meta["roi"]), np.asarray(meta["depths"]),
                                 values.reshape(shape), DlvConfig(**cfg))


def roi_around(points: Sequence, margin: int, width: int, height: int) -> Tuple[int, int, int, int]:
    """Smallest image-clipped rectangle covering ``points`` (x, y) plus ``margin``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x0 = int(max(0, math.floor(pts[:, 0].min()) - margin))
    y0 = int(max(0, math.floor(pts[:, 1].min()) - margin))
    x1 = int(min(width, math.floor(pts[:, 0].max()) + margin + 1))
    y1 = int(min(height, math.floor(pts[:, 1].max()) + margin + 1))
    if x1 <= x0 or y1 <= y0:
        raise DlvError("points fall outside the image")
    return x0, y0, x1 - x0, y1 - y0
