"""Read and write the on-disk light-field container.

A container is a directory holding ``lightfield.json`` and one 16-bit RGB PNG
per view named ``view_{t}_{s}.png``.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .lightfield import CameraModel, LightField4D, LightFieldError

METADATA_NAME = "lightfield.json"
REQUIRED_KEYS = ("spatial_h", "spatial_w", "angular_h", "angular_w", "bit_depth")


class ContainerError(LightFieldError):
    """Base class for container parse failures."""


class MissingViewError(ContainerError):
    pass


class DimensionMismatchError(ContainerError):
    pass


class MetadataError(ContainerError):
    pass


def view_filename(t: int, s: int) -> str:
    return f"view_{t}_{s}.png"


def store_lightfield(lf: LightField4D, path, camera: Optional[CameraModel] = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "spatial_h": lf.spatial_h,
        "spatial_w": lf.spatial_w,
        "angular_h": lf.angular_h,
        "angular_w": lf.angular_w,
        "bit_depth": 16,
    }
    if camera is not None:
        meta["camera"] = camera.to_dict()
        meta["baseline_m"] = camera.baseline
    (path / METADATA_NAME).write_text(json.dumps(meta, indent=2, sort_keys=True))
    for t in range(lf.angular_h):
        for s in range(lf.angular_w):
            img = np.round(lf.data[:, :, t, s, :] * 65535.0).astype(np.uint16)
            ok = cv2.imwrite(str(path / view_filename(t, s)), img[:, :, ::-1])
            if not ok:
                raise OSError(f"failed to write {path / view_filename(t, s)}")
    return path


def read_metadata(path) -> dict:
    path = Path(path)
    meta_path = path / METADATA_NAME
    if not meta_path.is_file():
        raise MetadataError(f"missing {METADATA_NAME} in {path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise MetadataError(f"malformed {METADATA_NAME}: {exc}") from exc
    for key in REQUIRED_KEYS:
        if key not in meta:
            raise MetadataError(f"{METADATA_NAME} lacks key '{key}'")
    for key in ("spatial_h", "spatial_w", "angular_h", "angular_w"):
        if not isinstance(meta[key], int) or meta[key] < 1:
            raise MetadataError(f"'{key}' must be a positive integer, got {meta[key]!r}")
    for key in ("angular_h", "angular_w"):
        if meta[key] % 2 == 0:
            raise MetadataError(f"'{key}' must be odd, got {meta[key]}")
    if meta["bit_depth"] not in (8, 16):
        raise MetadataError(f"unsupported bit_depth {meta['bit_depth']}")
    return meta


def load_camera(path) -> Optional[CameraModel]:
    meta = read_metadata(path)
    if "camera" not in meta:
        return None
    return CameraModel.from_dict(meta["camera"])


def load_lightfield(path) -> LightField4D:
    path = Path(path)
    meta = read_metadata(path)
    h, w = meta["spatial_h"], meta["spatial_w"]
    ah, aw = meta["angular_h"], meta["angular_w"]
    scale = float(2 ** meta["bit_depth"] - 1)
    data = np.empty((h, w, ah, aw, 3), dtype=float)
    for t in range(ah):
        for s in range(aw):
            fname = path / view_filename(t, s)
            if not fname.is_file():
                raise MissingViewError(f"missing view file {fname.name} (t={t}, s={s})")
            img = cv2.imread(str(fname), cv2.IMREAD_UNCHANGED)
            if img is None:
                raise ContainerError(f"unreadable view file {fname.name}")
            if img.ndim != 3 or img.shape[2] != 3:
                raise DimensionMismatchError(f"{fname.name} is not a 3-channel image")
            if img.shape[:2] != (h, w):
                raise DimensionMismatchError(
                    f"{fname.name} has size {img.shape[1]}x{img.shape[0]}, expected {w}x{h}")
            data[:, :, t, s, :] = img[:, :, ::-1] / scale
    return LightField4D(data)
