"""Published real-data results, kept as constants.

These come from real plenoptic captures and trained segmentation networks,
neither of which ships with this package, so nothing here is recomputed.
The synthetic property suite stands in for them.
"""
from __future__ import annotations

from typing import Dict, NamedTuple

OBJECTS = ("wc", "tc", "gj", "cc", "sb")
OBJECT_NAMES = {
    "wc": "wine cup",
    "tc": "tall cup",
    "gj": "glass jar",
    "cc": "champagne cup",
    "sb": "starbucks bottle",
}


class SegRow(NamedTuple):
    gAcc: float
    mAcc: float
    mIoU: float
    wIoU: float
    mBFS: float


class PoseRow(NamedTuple):
    auc: Dict[str, float]  # per object plus "all"
    time_per_object: str  # as printed, e.g. "< 10"


# transparent-material segmentation on the real test set
SEGMENTATION: Dict[str, SegRow] = {
    "2D": SegRow(0.871, 0.500, 0.228, 0.397, 0.140),
    "AF only": SegRow(0.917, 0.501, 0.318, 0.582, 0.197),
    "LIT": SegRow(0.954, 0.520, 0.455, 0.854, 0.390),
}

# ADD-S AUC (threshold 0.1 m) per object and over all objects
POSE_AUC: Dict[str, PoseRow] = {
    "DOPE": PoseRow({"wc": 0.14, "tc": 0.16, "gj": 0.21, "cc": 0.16, "sb": 0.00, "all": 0.18}, "< 1"),
    "AAE": PoseRow({"wc": 0.04, "tc": 0.15, "gj": 0.10, "cc": 0.05, "sb": 0.32, "all": 0.08}, "< 1"),
    "PMCL": PoseRow({"wc": 0.24, "tc": 0.32, "gj": 0.46, "cc": 0.28, "sb": 0.34, "all": 0.32}, "300"),
    "LIT": PoseRow({"wc": 0.38, "tc": 0.32, "gj": 0.62, "cc": 0.35, "sb": 0.44, "all": 0.45}, "< 10"),
}

TIME_BUDGET_S = 10.0  # per object, the "< 10" entry for LIT

GAP = ("Real-data scores need the light-field captures and the trained first-stage "
       "network; neither is available here, so these values are quoted, not reproduced.")
