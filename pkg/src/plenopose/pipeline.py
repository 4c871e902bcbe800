"""End-to-end plumbing behind the command-line tools.

The first stage (segmentation and center votes) is read from files, either
the scene oracle's or a network's.  Each object is then handled on its own:
a depth likelihood volume around its vote endpoints, then particle-based pose
estimation against its share of the segmentation.
"""
from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from scipy import ndimage

from . import files
from .config import PipelineConfig
from .dlv import DepthLikelihoodVolume, build_dlv, roi_around, store_dlv
from .evaluation import MetricsReport, add_s, plot_rows, seg_metrics
from .geometry import ObjectModel, Pose
from .lfio import load_camera, load_lightfield, store_lightfield
from .lightfield import CameraModel, LightField4D
from .losses import CenterVoteField
from .pose import EstimateResult, PoseError, estimate
from .scene import SceneSpec, render

log = logging.getLogger(__name__)

ROI_MARGIN = 4  # px around the vote endpoints


class PipelineError(RuntimeError):
    pass


def synthesize(spec: SceneSpec, out_dir) -> Path:
    """Render ``spec`` and write a complete scene directory."""
    out = Path(out_dir)
    r = render(spec)
    store_lightfield(r.lightfield, out, spec.camera)
    files.write_seg(r.seg, out / files.SEG_NAME)
    labels = [o.label for o in spec.objects]
    files.write_votes(dict(zip(labels, r.votes)), out / files.VOTES_NAME)
    for label, model in zip(labels, r.models):
        files.write_model(model, files.model_path(out, label))
    files.write_gt(labels, r.gt_poses, r.gt_center_px, out / files.GT_NAME)
    files.dump_json(spec.to_dict(), out / "scene.json")
    return out


def object_region(seg: np.ndarray, votes: CenterVoteField) -> np.ndarray:
    """Connected object regions (classes >= 1) that contain any of the voting pixels.

    With several objects in one segmentation this separates them the way a
    per-box detector would; a lone object keeps its whole region.
    """
    region = np.asarray(seg) >= 1
    comp, n = ndimage.label(region, structure=np.ones((3, 3)))
    if n == 0:
        raise PoseError("segmentation has no object pixels")
    px = np.floor(votes.pixels + 0.5).astype(int)
    h, w = region.shape
    inside = (px[:, 0] >= 0) & (px[:, 0] < w) & (px[:, 1] >= 0) & (px[:, 1] < h)
    ids = np.unique(comp[px[inside, 1], px[inside, 0]])
    ids = ids[ids > 0]
    if ids.size == 0:
        raise PoseError("no voting pixel lies on a segmented object")
    return np.isin(comp, ids)


def object_dlv(lf: LightField4D, cam: CameraModel, votes: CenterVoteField, cfg: PipelineConfig,
               threads: Optional[int] = None) -> DepthLikelihoodVolume:
    roi = roi_around(votes.endpoints, ROI_MARGIN, lf.spatial_w, lf.spatial_h)
    return build_dlv(lf, cam, roi, cfg.dlv, threads=threads)


def estimate_object(seg: np.ndarray, votes: CenterVoteField, dlv: DepthLikelihoodVolume,
                    model: ObjectModel, cam: CameraModel, cfg: PipelineConfig,
                    threads: Optional[int] = None) -> EstimateResult:
    return estimate(object_region(seg, votes), votes, dlv, model, cam, cfg.likelihood, cfg.diffusion,
                    cfg.termination, rng_seed=cfg.seed, threads=threads)


def require_camera(lf_dir) -> CameraModel:
    cam = load_camera(lf_dir)
    if cam is None:
        raise PipelineError(f"{Path(lf_dir) / 'lightfield.json'} has no camera intrinsics")
    return cam


def evaluate(estimates: Dict[str, Pose], scene_dir, max_threshold: float = 0.1,
             seg_pred: Optional[np.ndarray] = None) -> dict:
    """Metrics report for estimated poses against a scene's ground truth."""
    gt_poses, models = files.read_gt(scene_dir)
    missing = sorted(set(gt_poses) - set(estimates))
    if missing:
        raise PipelineError(f"no estimate for objects: {', '.join(missing)}")
    errors = {k: add_s(models[k], estimates[k], gt_poses[k]) for k in sorted(gt_poses)}
    seg = None
    if seg_pred is not None:
        seg = seg_metrics(seg_pred, files.read_seg(Path(scene_dir) / files.SEG_NAME))
    report = MetricsReport(errors, max_threshold, seg).to_dict()
    report["estimates"] = {k: estimates[k].to_dict() for k in sorted(estimates)}
    return report


def read_estimates(est_dir) -> dict:
    """``<est_dir>/<label>/pose.json`` for every label subdirectory."""
    est_dir = Path(est_dir)
    if not est_dir.is_dir():
        raise files.MissingFileError(est_dir, "estimate directory")
    out = {}
    for sub in sorted(p for p in est_dir.iterdir() if p.is_dir()):
        if (sub / files.POSE_NAME).exists():
            out[sub.name] = files.read_pose(sub / files.POSE_NAME)
    return out


def run(scene_dir, out_dir, cfg: PipelineConfig = PipelineConfig(), threads: Optional[int] = None) -> dict:
    """Estimate every object of a scene directory and write the results tree.

    Writes ``<out>/<label>/pose.json``, ``<out>/<label>/dlv/`` and
    ``<out>/report.json``.  The report carries ADD-S metrics when the scene
    has ground truth, and the estimates in any case.
    """
    scene_dir, out_dir = Path(scene_dir), Path(out_dir)
    votes = files.read_votes(scene_dir / files.VOTES_NAME)
    seg = files.read_seg(scene_dir / files.SEG_NAME)
    cam = require_camera(scene_dir)
    lf = load_lightfield(scene_dir)
    if seg.shape != (lf.spatial_h, lf.spatial_w):
        raise PipelineError(f"segmentation is {seg.shape[1]}x{seg.shape[0]}, "
                            f"light field is {lf.spatial_w}x{lf.spatial_h}")
    estimates = {}
    for label, v in votes.items():
        model = files.read_model(files.model_path(scene_dir, label))
        vol = object_dlv(lf, cam, v, cfg, threads)
        store_dlv(vol, out_dir / label / "dlv")
        res = estimate_object(seg, v, vol, model, cam, cfg, threads)
        files.write_pose(res.pose, out_dir / label / files.POSE_NAME, res.weight, res.iterations)
        log.info("%s: weight %.3f after %d rounds", label, res.weight, res.iterations)
        estimates[label] = res.pose
    if (scene_dir / files.GT_NAME).exists():
        report = evaluate(estimates, scene_dir)
    else:
        report = {"estimates": {k: estimates[k].to_dict() for k in sorted(estimates)}}
    files.dump_json(report, out_dir / files.REPORT_NAME)
    return report


def plot_csv(report: dict) -> str:
    """``threshold_m,accuracy`` rows of a report's accuracy step curve."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold_m", "accuracy"])
    for t, a in plot_rows(report):
        writer.writerow([repr(float(t)), repr(float(a))])
    return buf.getvalue()
