"""Pose and segmentation metrics.

ADD-S is the mean, over model points transformed by the estimate, of the
distance to the nearest model point transformed by the ground truth.  The AUC
is the exact integral of the empirical accuracy-vs-threshold step function,
normalized by the maximum threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .geometry import ObjectModel, Pose

BRUTE_FORCE_LIMIT = 5000
DEFAULT_MAX_THRESHOLD = 0.1  # meters


class MetricError(ValueError):
    pass


def nearest_distances_brute(src: np.ndarray, dst: np.ndarray, chunk: int = 1024) -> np.ndarray:
    out = np.empty(len(src))
    for i in range(0, len(src), chunk):
        d = np.linalg.norm(src[i:i + chunk, None, :] - dst[None, :, :], axis=-1)
        out[i:i + chunk] = d.min(axis=1)
    return out


def add_s(model: ObjectModel, est: Pose, gt: Pose) -> float:
    pts = model.points
    if len(pts) == 0:
        raise MetricError("empty model")
    p_est = est.transform(pts)
    p_gt = gt.transform(pts)
    if len(pts) <= BRUTE_FORCE_LIMIT:
        d = nearest_distances_brute(p_est, p_gt)
    else:
        d, _ = cKDTree(p_gt).query(p_est, k=1)
    return float(np.mean(d))


@dataclass(frozen=True)
class AccuracyCurve:
    thresholds: np.ndarray
    accuracy: np.ndarray
    max_threshold: float
    errors: np.ndarray  # sorted


def accuracy_at(errors: np.ndarray, threshold) -> np.ndarray:
    errors = np.sort(np.asarray(errors, dtype=float))
    return np.searchsorted(errors, threshold, side="right") / len(errors)


def accuracy_curve(errors: Sequence[float], max_threshold: float = DEFAULT_MAX_THRESHOLD,
                   num: int = 1001) -> AccuracyCurve:
    """Fraction of errors at or below each threshold in ``[0, max_threshold]``.

    The samples are a uniform grid merged with every error value inside the
    range, so each step of the empirical curve is represented.
    """
    errors = np.sort(np.asarray(errors, dtype=float))
    if errors.size == 0:
        raise MetricError("no errors to build a curve from")
    if not max_threshold > 0:
        raise MetricError("max_threshold must be positive")
    grid = np.linspace(0.0, max_threshold, num)
    jumps = errors[(errors >= 0) & (errors <= max_threshold)]
    thr = np.unique(np.concatenate([grid, jumps]))
    return AccuracyCurve(thr, accuracy_at(errors, thr), float(max_threshold), errors)


def auc(curve_or_errors, max_threshold: Optional[float] = None) -> float:
    """Normalized area under the accuracy curve, from the exact step function.

    ``(1/T) * integral_0^T acc = 1 - mean(min(e, T)) / T``.
    """
    if isinstance(curve_or_errors, AccuracyCurve):
        errors, T = curve_or_errors.errors, curve_or_errors.max_threshold
    else:
        errors = np.asarray(curve_or_errors, dtype=float)
        T = DEFAULT_MAX_THRESHOLD if max_threshold is None else max_threshold
    if errors.size == 0:
        raise MetricError("no errors")
    clipped = np.minimum(np.maximum(errors, 0.0), T)
    return 1.0 - (math.fsum(clipped.tolist()) / errors.size) / T


def step_points(curve: AccuracyCurve):
    """Breakpoints ``(threshold, accuracy)`` of the step function over ``[0, T]``."""
    T = curve.max_threshold
    inside = curve.errors[(curve.errors > 0) & (curve.errors <= T)]
    thr = np.unique(np.concatenate([[0.0], inside, [T]]))
    return thr, accuracy_at(curve.errors, thr)


# ---------------------------------------------------------------- segmentation

def _class_boundary(mask: np.ndarray) -> np.ndarray:
    if not mask.any():
        return mask
    return mask & ~ndimage.binary_erosion(mask, structure=np.ones((3, 3)), border_value=1)


def boundary_f1(pred_mask: np.ndarray, gt_mask: np.ndarray, tolerance: float) -> float:
    """Boundary F1 of one class with a pixel-distance match tolerance."""
    bp, bg = _class_boundary(pred_mask), _class_boundary(gt_mask)
    if not bp.any() and not bg.any():
        return 1.0
    if not bp.any() or not bg.any():
        return 0.0
    dist_to_gt = ndimage.distance_transform_edt(~bg)
    dist_to_pred = ndimage.distance_transform_edt(~bp)
    precision = float(np.mean(dist_to_gt[bp] <= tolerance))
    recall = float(np.mean(dist_to_pred[bg] <= tolerance))
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class SegMetrics:
    gAcc: float
    mAcc: float
    mIoU: float
    wIoU: float
    mBFS: float
    per_class_accuracy: Dict[int, float] = field(default_factory=dict)
    per_class_iou: Dict[int, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"gAcc": self.gAcc, "mAcc": self.mAcc, "mIoU": self.mIoU, "wIoU": self.wIoU,
                "mBFS": self.mBFS}


def seg_metrics(pred: np.ndarray, gt: np.ndarray, num_classes: int = 3,
                bf_tolerance: Optional[float] = None) -> SegMetrics:
    """gAcc, mAcc, mIoU, frequency-weighted IoU and mean boundary F1.

    Classes absent from both maps are left out of every mean.  The default
    boundary tolerance is 0.75% of the image diagonal.
    """
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if bf_tolerance is None:
        bf_tolerance = 0.0075 * math.hypot(*gt.shape)
    acc, ious, bfs, freq = {}, {}, [], []
    for c in range(num_classes):
        p, g = pred == c, gt == c
        if not p.any() and not g.any():
            continue
        inter = np.count_nonzero(p & g)
        union = np.count_nonzero(p | g)
        ious[c] = inter / union
        if g.any():
            acc[c] = inter / np.count_nonzero(g)
        freq.append((np.count_nonzero(g), ious[c]))
        bfs.append(boundary_f1(p, g, bf_tolerance))
    total = sum(f for f, _ in freq)
    return SegMetrics(
        gAcc=float(np.mean(pred == gt)),
        mAcc=float(np.mean(list(acc.values()))) if acc else 0.0,
        mIoU=float(np.mean(list(ious.values()))),
        wIoU=float(sum(f * i for f, i in freq) / total) if total else 0.0,
        mBFS=float(np.mean(bfs)),
        per_class_accuracy=acc,
        per_class_iou=ious,
    )


@dataclass
class MetricsReport:
    add_s: Dict[str, float]
    max_threshold: float = DEFAULT_MAX_THRESHOLD
    segmentation: Optional[SegMetrics] = None

    def curve(self) -> AccuracyCurve:
        return accuracy_curve(list(self.add_s.values()), self.max_threshold)

    def to_dict(self) -> dict:
        curve = self.curve()
        thr, acc = step_points(curve)
        d = {
            "add_s_m": {k: float(v) for k, v in sorted(self.add_s.items())},
            "max_threshold_m": self.max_threshold,
            "auc": auc(curve),
            "curve": {"threshold_m": [float(t) for t in thr], "accuracy": [float(a) for a in acc]},
        }
        if self.segmentation is not None:
            d["segmentation"] = self.segmentation.as_dict()
        return d


def curve_from_report(report: dict) -> AccuracyCurve:
    try:
        errors = list(report["add_s_m"].values())
        T = float(report.get("max_threshold_m", DEFAULT_MAX_THRESHOLD))
    except (KeyError, AttributeError, TypeError) as exc:
        raise MetricError(f"malformed report: {exc}") from exc
    return accuracy_curve(errors, T)


def plot_rows(report: dict) -> List[tuple]:
    """``(threshold, accuracy)`` breakpoints of a report's step curve."""
    thr, acc = step_points(curve_from_report(report))
    return list(zip(thr.tolist(), acc.tolist()))
