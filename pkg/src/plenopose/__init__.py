"""Light-field pose estimation for transparent objects.

Submodules: ``lightfield`` and ``lfio`` (4D data and its container format),
``filters`` (angular and EPI filter banks with exact backward passes),
``losses`` (training objectives), ``dlv`` (depth likelihood volumes),
``geometry`` and ``pose`` (models, poses and the particle estimator),
``scene`` (synthetic oracle), ``evaluation`` (ADD-S, AUC, segmentation
metrics), ``reference`` (published real-data numbers), ``config``,
``pipeline`` and ``cli``.
"""
from . import dlv, evaluation, filters, geometry, lfio, lightfield, losses, pose, reference, scene
from .config import PipelineConfig
from .dlv import DepthLikelihoodVolume, DlvConfig, build_dlv
from .evaluation import accuracy_curve, add_s, auc, seg_metrics
from .geometry import ObjectModel, Pose, make_object
from .lightfield import CameraModel, LightField4D
from .losses import CenterVoteField, LossConfig
from .pose import DiffusionConfig, LikelihoodConfig, TerminationConfig, estimate

__version__ = "0.1.0"

__all__ = [
    "CameraModel", "CenterVoteField", "DepthLikelihoodVolume", "DiffusionConfig", "DlvConfig",
    "LightField4D", "LikelihoodConfig", "LossConfig", "ObjectModel", "PipelineConfig", "Pose",
    "TerminationConfig", "accuracy_curve", "add_s", "auc", "build_dlv", "dlv", "estimate",
    "evaluation", "filters", "geometry", "lfio", "lightfield", "losses", "make_object", "pose",
    "reference", "scene", "seg_metrics",
]
