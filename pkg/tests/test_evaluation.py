import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import pdist

from plenopose import evaluation as E
from plenopose.geometry import ObjectModel, Pose, axis_angle_quats, make_object, random_rotations
from tests import oracles


def random_pose(rng, scale=0.1):
    return Pose(rng.normal(scale=scale, size=3), random_rotations(rng, 1)[0])


# ---------------------------------------------------------------- ADD-S


def test_identical_poses_give_zero(rng):
    obj = make_object("cylinder", {"radius": 0.04, "height": 0.12}, 500)
    p = random_pose(rng)
    assert E.add_s(obj, p, p) == 0


def test_three_point_hand_case():
    obj = ObjectModel.from_points("tri", [[0, 0, 0], [1, 0, 0], [0, 2, 0]])
    est = Pose([0.5, 0, 0], [1, 0, 0, 0])
    gt = Pose([0, 0, 0], [1, 0, 0, 0])
    # shifted points (0.5,0,0) (1.5,0,0) (0.5,2,0): nearest 0.5, 0.5, 0.5
    assert E.add_s(obj, est, gt) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(scale=0.05, size=(int(rng.integers(3, 40)), 3))
    obj = ObjectModel.from_points("m", pts)
    est, gt = random_pose(rng), random_pose(rng)
    ref = oracles.brute_add_s(obj.points, est.R, est.translation, gt.R, gt.translation)
    assert abs(E.add_s(obj, est, gt) - ref) <= 1e-12


def test_tree_path_equals_brute_force(rng):
    pts = rng.normal(scale=0.05, size=(E.BRUTE_FORCE_LIMIT + 500, 3))
    obj = ObjectModel.from_points("big", pts)
    est, gt = random_pose(rng), random_pose(rng)
    d = E.nearest_distances_brute(est.transform(pts), gt.transform(pts))
    assert E.add_s(obj, est, gt) == pytest.approx(d.mean(), abs=1e-12)


@pytest.mark.parametrize("angle", [0.3, 1.7, np.pi])
def test_symmetry_spin_is_invisible(angle):
    # dense samples: with 5000 the nearest-sample gap alone is about 1.5 mm
    obj = make_object("cylinder", {"radius": 0.04, "height": 0.12}, 20000)
    gt = Pose([0.0, 0.0, 0.5], [1, 0, 0, 0])
    spin = axis_angle_quats(np.array([[0.0, 0.0, 1.0]]), np.array([angle]))[0]
    assert E.add_s(obj, Pose(gt.translation, spin), gt) < 1e-3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_triangle_bound(seed):
    rng = np.random.default_rng(seed)
    obj = ObjectModel.from_points("m", rng.normal(scale=0.05, size=(30, 3)))
    est, gt = random_pose(rng), random_pose(rng)
    bound = pdist(obj.points).max() + np.linalg.norm(est.translation - gt.translation)
    assert 0 <= E.add_s(obj, est, gt) <= bound + 1e-12


def test_empty_model_rejected():
    class Empty:
        points = np.zeros((0, 3))

    with pytest.raises(E.MetricError):
        E.add_s(Empty(), Pose.identity(), Pose.identity())


# ---------------------------------------------------------------- curves


@pytest.mark.parametrize("e", [0.01, 0.05, 0.09])
def test_constant_error_auc(e):
    assert E.auc([e] * 7, 0.1) == 1 - e / 0.1


def test_auc_edge_cases():
    assert E.auc([0.0, 0.0], 0.1) == 1.0
    assert E.auc([0.2, 0.5], 0.1) == 0.0
    with pytest.raises(E.MetricError):
        E.auc([], 0.1)
    with pytest.raises(E.MetricError):
        E.accuracy_curve([], 0.1)
    with pytest.raises(E.MetricError):
        E.accuracy_curve([0.1], 0.0)


def test_auc_equals_integral_of_dense_curve(rng):
    errors = rng.uniform(0, 0.15, 40)
    curve = E.accuracy_curve(errors, 0.1, num=200_001)
    # right Riemann sum of a right-continuous step function from above
    dense = np.sum(curve.accuracy[:-1] * np.diff(curve.thresholds)) / 0.1
    assert E.auc(curve) == pytest.approx(dense, abs=1e-4)
    assert E.auc(curve) == E.auc(errors, 0.1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 0.3), min_size=1, max_size=20), st.integers(0, 19), st.floats(0, 0.1))
def test_auc_weakly_decreases(errors, i, bump):
    i %= len(errors)
    worse = list(errors)
    worse[i] += bump
    assert E.auc(worse, 0.1) <= E.auc(errors, 0.1) + 1e-15


def test_curve_is_monotone_and_bounded(rng):
    c = E.accuracy_curve(rng.exponential(0.03, 50), 0.1)
    assert np.all(np.diff(c.accuracy) >= 0)
    assert c.accuracy.min() >= 0 and c.accuracy.max() <= 1
    assert c.thresholds[0] == 0 and c.thresholds[-1] == 0.1


def test_step_points_for_constant_error():
    thr, acc = E.step_points(E.accuracy_curve([0.04, 0.04], 0.1))
    assert list(thr) == [0.0, 0.04, 0.1]
    assert list(acc) == [0.0, 1.0, 1.0]


# ---------------------------------------------------------------- segmentation


def test_perfect_prediction(rng):
    gt = rng.integers(0, 3, size=(20, 20))
    m = E.seg_metrics(gt, gt)
    assert (m.gAcc, m.mAcc, m.mIoU, m.wIoU, m.mBFS) == (1, 1, 1, 1, 1)


def test_two_by_two_counting():
    gt = np.array([[0, 1], [0, 1]])
    pred = np.zeros((2, 2), int)
    m = E.seg_metrics(pred, gt)
    assert m.gAcc == 0.5
    assert m.per_class_iou == {0: 0.5, 1: 0.0}
    assert m.mAcc == 0.5  # class 0 fully right, class 1 fully missed
    assert m.mIoU == 0.25
    assert m.wIoU == 0.25
    assert 2 not in m.per_class_iou


def test_shape_mismatch():
    with pytest.raises(ValueError):
        E.seg_metrics(np.zeros((3, 3)), np.zeros((3, 4)))


@pytest.mark.parametrize("seed", range(5))
def test_iou_never_exceeds_class_accuracy(seed):
    rng = np.random.default_rng(seed)
    gt = rng.integers(0, 3, size=(30, 30))
    pred = np.where(rng.random((30, 30)) < 0.7, gt, rng.integers(0, 3, size=(30, 30)))
    m = E.seg_metrics(pred, gt)
    for c, iou in m.per_class_iou.items():
        assert iou <= m.per_class_accuracy[c] + 1e-15
    for v in m.as_dict().values():
        assert 0 <= v <= 1


def test_boundary_f1_tolerance():
    gt = np.zeros((40, 40), bool)
    gt[10:30, 10:30] = True
    shifted = np.roll(gt, 1, axis=1)
    assert E.boundary_f1(gt, gt, 0.5) == 1.0
    assert E.boundary_f1(shifted, gt, 1.0) == 1.0
    assert E.boundary_f1(shifted, gt, 0.5) < 1.0


# ---------------------------------------------------------------- reports


def test_report_round_trip():
    rep = E.MetricsReport({"b": 0.02, "a": 0.2}).to_dict()
    assert list(rep["add_s_m"]) == ["a", "b"]
    assert rep["auc"] == pytest.approx(1 - (0.02 + 0.1) / 2 / 0.1)
    assert E.plot_rows(rep) == [(0.0, 0.0), (0.02, 0.5), (0.1, 0.5)]
    with pytest.raises(E.MetricError):
        E.curve_from_report({"nope": 1})
