"""On-disk formats shared by the command-line tools.

A scene directory holds the light-field container plus ``seg.png`` (class
indices), ``votes.json`` (center votes per object), ``gt.json`` (ground-truth
poses) and ``models/<label>.json``.  JSON is written with sorted keys and a
trailing newline so identical content gives identical bytes.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Tuple

import cv2
import numpy as np

from .geometry import ObjectModel, Pose
from .losses import CenterVoteField

SEG_NAME = "seg.png"
VOTES_NAME = "votes.json"
GT_NAME = "gt.json"
MODELS_DIR = "models"
POSE_NAME = "pose.json"
REPORT_NAME = "report.json"


class FormatError(ValueError):
    pass


class MissingFileError(FormatError):
    def __init__(self, path, what: str = "file"):
        super().__init__(f"missing {what}: {path}")
        self.path = str(path)


def _require(path, what: str = "file") -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(path, what)
    return path


def dump_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path, what: str = "file"):
    path = _require(path, what)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------- segmentation

def write_seg(seg: np.ndarray, path) -> Path:
    seg = np.asarray(seg)
    if seg.ndim != 2 or seg.min(initial=0) < 0 or seg.max(initial=0) > 255:
        raise FormatError("segmentation must be a 2-D map of class indices 0..255")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), seg.astype(np.uint8)):
        raise OSError(f"failed to write {path}")
    return path


def read_seg(path) -> np.ndarray:
    path = _require(path, "segmentation")
    seg = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if seg is None:
        raise FormatError(f"{path} is not a readable PNG")
    if seg.ndim != 2 or seg.dtype != np.uint8:
        raise FormatError(f"{path} must be a single-channel 8-bit class-index PNG")
    return seg


# ---------------------------------------------------------------- votes

def votes_to_dict(label: str, votes: CenterVoteField) -> dict:
    return {"label": label, "pixels": votes.pixels.tolist(), "offsets": votes.offsets.tolist(),
            "confidences": votes.confidences.tolist()}


def write_votes(votes: Dict[str, CenterVoteField], path) -> Path:
    return dump_json({"objects": [votes_to_dict(k, v) for k, v in votes.items()]}, path)


def read_votes(path) -> Dict[str, CenterVoteField]:
    d = read_json(path, "votes file")
    try:
        out = {}
        for o in d["objects"]:
            label = str(o["label"])
            if label in out:
                raise FormatError(f"duplicate object label {label!r} in {path}")
            out[label] = CenterVoteField(o["pixels"], o["offsets"], o["confidences"])
        return out
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed votes file {path}: {exc}") from exc


# ---------------------------------------------------------------- poses and models

def write_pose(pose: Pose, path, weight: float = None, iterations: int = None) -> Path:
    d = pose.to_dict()
    if weight is not None:
        d["weight"] = float(weight)
    if iterations is not None:
        d["iterations"] = int(iterations)
    return dump_json(d, path)


def read_pose(path) -> Pose:
    d = read_json(path, "pose file")
    try:
        return Pose.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed pose file {path}: {exc}") from exc


def write_model(model: ObjectModel, path) -> Path:
    return dump_json(model.to_dict(), path)


def read_model(path) -> ObjectModel:
    d = read_json(path, "model file")
    try:
        return ObjectModel.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model file {path}: {exc}") from exc


def model_path(scene_dir, label: str) -> Path:
    return Path(scene_dir) / MODELS_DIR / f"{label}.json"


def write_gt(labels: List[str], poses: List[Pose], centers: np.ndarray, path) -> Path:
    objs = []
    for label, pose, c in zip(labels, poses, centers):
        d = {"label": label, "center_px": [float(c[0]), float(c[1])],
             "model": f"{MODELS_DIR}/{label}.json"}
        d.update(pose.to_dict())
        objs.append(d)
    return dump_json({"objects": objs}, path)


def read_gt(scene_dir) -> Tuple[Dict[str, Pose], Dict[str, ObjectModel]]:
    """Ground-truth poses and models of a scene directory, keyed by label."""
    scene_dir = Path(scene_dir)
    d = read_json(scene_dir / GT_NAME, "ground-truth file")
    poses, models = {}, {}
    try:
        for o in d["objects"]:
            label = str(o["label"])
            poses[label] = Pose.from_dict(o)
            models[label] = read_model(scene_dir / o.get("model", f"{MODELS_DIR}/{label}.json"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed ground truth in {scene_dir}: {exc}") from exc
    return poses, models
