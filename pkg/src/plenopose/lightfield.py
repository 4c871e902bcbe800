"""4D light-field container, view/patch/EPI accessors and plane-sweep geometry.

Samples are stored as a dense ``(y, x, t, s, channel)`` array.  Angular
indices are zero based and the center view sits at
``((angular_w - 1) / 2, (angular_h - 1) / 2)``.

Convention for a rectified grid: the camera of view ``(s, t)`` is displaced by
``-baseline * (s - center_s, t - center_t, 0)`` from the center camera, so a
point imaged at center pixel ``(x0, y0)`` with disparity ``d`` appears in view
``(s, t)`` at ``(x0 + d * (s - center_s), y0 + d * (t - center_t))``.  EPI
lines therefore have slope ``+d`` pixels per view.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class LightFieldError(ValueError):
    """Raised for light fields or cameras that violate their invariants."""


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics of the center view plus the sub-aperture baseline."""

    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float
    image_w: int
    image_h: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0 and self.baseline > 0):
            raise LightFieldError("fx, fy and baseline must be positive")
        if not (0 <= self.cx < self.image_w and 0 <= self.cy < self.image_h):
            raise LightFieldError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "baseline_m": self.baseline, "image_w": self.image_w, "image_h": self.image_h,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        baseline = d["baseline_m"] if "baseline_m" in d else d["baseline"]
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   float(baseline), int(d["image_w"]), int(d["image_h"]))


@dataclass(frozen=True, eq=False)
class LightField4D:
    """Dense light field ``data[y, x, t, s, c]`` with values in [0, 1].

    ``valid`` is an optional ``(y, x, t, s)`` boolean mask produced by
    resampling operations; ``None`` means every sample is valid.
    """

    data: np.ndarray
    valid: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 5:
            raise LightFieldError(f"expected a 5D (y, x, t, s, c) array, got shape {data.shape}")
        if min(data.shape) < 1:
            raise LightFieldError(f"all dimensions must be >= 1, got {data.shape}")
        if data.shape[4] != 3:
            raise LightFieldError(f"expected 3 color channels, got {data.shape[4]}")
        if data.shape[2] % 2 == 0 or data.shape[3] % 2 == 0:
            raise LightFieldError(
                f"angular dims must be odd so a center view exists, got {data.shape[2]}x{data.shape[3]}")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise LightFieldError("light-field samples must be finite and in [0, 1]")
        if self.valid is not None and self.valid.shape != data.shape[:4]:
            raise LightFieldError("validity mask must have shape (y, x, t, s)")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_views(cls, views: Sequence[Sequence[np.ndarray]]) -> "LightField4D":
        """Assemble from a nested ``views[t][s]`` list of ``H x W x 3`` images."""
        rows = [np.stack(list(row), axis=2) for row in views]  # (H, W, S, 3)
        return cls(np.stack(rows, axis=2))

    @property
    def spatial_h(self) -> int:
        return self.data.shape[0]

    @property
    def spatial_w(self) -> int:
        return self.data.shape[1]

    @property
    def angular_h(self) -> int:
        return self.data.shape[2]

    @property
    def angular_w(self) -> int:
        return self.data.shape[3]

    @property
    def center_s(self) -> int:
        return (self.angular_w - 1) // 2

    @property
    def center_t(self) -> int:
        return (self.angular_h - 1) // 2

    @property
    def validity(self) -> np.ndarray:
        if self.valid is None:
            return np.ones(self.data.shape[:4], dtype=bool)
        return self.valid

    def center_view(self) -> np.ndarray:
        return self.data[:, :, self.center_t, self.center_s, :]


@dataclass(frozen=True)
class EpiSlice:
    """An epipolar-plane image: ``data[spatial, angular, channel]``."""

    orientation: str  # "s" or "t"
    data: np.ndarray


def _check_index(value, upper, name):
    if not (0 <= value < upper):
        raise IndexError(f"{name}={value} out of range [0, {upper})")


def subaperture_view(lf: LightField4D, s: int, t: int) -> np.ndarray:
    _check_index(s, lf.angular_w, "s")
    _check_index(t, lf.angular_h, "t")
    return lf.data[:, :, t, s, :]


def angular_patch(lf: LightField4D, x: int, y: int) -> np.ndarray:
    """All views of one spatial pixel as an ``(angular_h, angular_w, 3)`` array."""
    _check_index(x, lf.spatial_w, "x")
    _check_index(y, lf.spatial_h, "y")
    return lf.data[y, x]


def epi_slice_s(lf: LightField4D, y: int, t: int) -> EpiSlice:
    _check_index(y, lf.spatial_h, "y")
    _check_index(t, lf.angular_h, "t")
    return EpiSlice("s", lf.data[y, :, t, :, :])


def epi_slice_t(lf: LightField4D, x: int, s: int) -> EpiSlice:
    _check_index(x, lf.spatial_w, "x")
    _check_index(s, lf.angular_w, "s")
    return EpiSlice("t", lf.data[:, x, :, s, :])


def subsample_angular(lf: LightField4D, stride: int) -> LightField4D:
    """Keep every ``stride``-th view starting at index 0 (9x9 -> 5x5 for stride 2)."""
    if stride < 1:
        raise LightFieldError("stride must be >= 1")
    return LightField4D(lf.data[:, :, ::stride, ::stride, :])


def depth_to_disparity(cam: CameraModel, depth):
    """Per-adjacent-view disparity in pixels, ``fx * baseline / depth``."""
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0):
        raise LightFieldError("depth must be positive")
    disparity = cam.fx * cam.baseline / depth
    return float(disparity) if disparity.ndim == 0 else disparity


def disparity_to_depth(cam: CameraModel, disparity):
    disparity = np.asarray(disparity, dtype=float)
    if np.any(disparity <= 0):
        raise LightFieldError("disparity must be positive")
    depth = cam.fx * cam.baseline / disparity
    return float(depth) if depth.ndim == 0 else depth


def shift_image(img: np.ndarray, dx: float, dy: float):
    """Bilinearly sample ``img`` at ``(x + dx, y + dy)`` for every pixel.

    Returns ``(out, valid)``.  Samples whose bilinear support leaves the
    frame are zeroed and flagged invalid.  Integer shifts are exact
    re-indexing.
    """
    h, w = img.shape[:2]
    ix, fx = int(np.floor(dx)), dx - np.floor(dx)
    iy, fy = int(np.floor(dy)), dy - np.floor(dy)
    # integer shift: support is a single sample
    nx = 1 if fx == 0.0 else 2
    ny = 1 if fy == 0.0 else 2

    out = np.zeros_like(img)
    valid = np.zeros((h, w), dtype=bool)
    # rows y with y+iy >= 0 and y+iy+ny-1 <= h-1
    y0, y1 = max(0, -iy), min(h, h - iy - ny + 1)
    x0, x1 = max(0, -ix), min(w, w - ix - nx + 1)
    if y1 <= y0 or x1 <= x0:
        return out, valid

    def src(oy, ox):
        return img[y0 + iy + oy:y1 + iy + oy, x0 + ix + ox:x1 + ix + ox]

    if nx == 1 and ny == 1:
        region = src(0, 0).copy()
    elif ny == 1:
        region = (1.0 - fx) * src(0, 0) + fx * src(0, 1)
    elif nx == 1:
        region = (1.0 - fy) * src(0, 0) + fy * src(1, 0)
    else:
        region = ((1.0 - fy) * ((1.0 - fx) * src(0, 0) + fx * src(0, 1))
                  + fy * ((1.0 - fx) * src(1, 0) + fx * src(1, 1)))
    out[y0:y1, x0:x1] = region
    valid[y0:y1, x0:x1] = True
    return out, valid


def shear(lf: LightField4D, disparity: float) -> LightField4D:
    """Resample every view toward the center view for a plane at ``disparity``.

    ``out(y, x, t, s) = lf(y + d (t - ct), x + d (s - cs), t, s)``; a plane at
    disparity ``d`` becomes angularly constant.  Out-of-frame samples are
    zeroed and marked invalid in the result's ``valid`` mask.
    """
    max_offset = max(lf.center_s, lf.center_t)
    if abs(disparity) * max_offset >= min(lf.spatial_w, lf.spatial_h):
        raise LightFieldError("shear moves every sample out of frame")
    if disparity == 0:
        return LightField4D(lf.data, lf.validity.copy())

    out = np.empty_like(lf.data)
    valid = np.empty(lf.data.shape[:4], dtype=bool)
    src_valid = lf.validity
    for t in range(lf.angular_h):
        for s in range(lf.angular_w):
            dx = disparity * (s - lf.center_s)
            dy = disparity * (t - lf.center_t)
            out[:, :, t, s], v = shift_image(lf.data[:, :, t, s], dx, dy)
            # propagate source invalidity through the resampling support
            sv, _ = shift_image(src_valid[:, :, t, s].astype(float), dx, dy)
            valid[:, :, t, s] = v & (sv > 1.0 - 1e-9)
    # bilinear weights of [0,1] data can overshoot by an ulp
    np.clip(out, 0.0, 1.0, out=out)
    return LightField4D(out, valid)
