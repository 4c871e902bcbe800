import numpy as np
import pytest
from scipy.spatial import ConvexHull
from scipy.stats import ks_2samp

from plenopose import scene as S
from plenopose.filters import angular_variance
from plenopose.geometry import Pose, make_object, upright_rotation
from plenopose.lightfield import depth_to_disparity, epi_slice_s, shear
from plenopose.losses import center_offset_loss, confidence_target
from tests import oracles


def cylinder(label="cylinder", t=(0.0, 0.0, 0.5), r=0.04, h=0.12, n=2000):
    return S.SceneObject("cylinder", {"radius": r, "height": h}, Pose.from_rotation(upright_rotation(), t), label, n)


# ---------------------------------------------------------------- models


def test_cylinder_model_diameter():
    obj = make_object("cylinder", {"radius": 0.04, "height": 0.12})
    assert obj.diameter == pytest.approx(0.1442, abs=1e-4)


def test_hundred_points_on_surface():
    obj = make_object("lathe", {"profile": [[0, 0.02], [0.05, 0.03], [0.1, 0.025]]}, 100)
    assert len(obj.points) == 100
    assert obj.mesh.surface_residual(obj.points).max() < 1e-9


def test_single_segment_lathe_is_a_cylinder():
    a = make_object("cylinder", {"radius": 0.03, "height": 0.1}, 1500).points
    b = make_object("lathe", {"profile": [[0.0, 0.03], [0.1, 0.03]]}, 1500).points
    ra, rb = np.hypot(a[:, 0], a[:, 1]), np.hypot(b[:, 0], b[:, 1])
    assert ks_2samp(ra, rb).pvalue > 0.05
    assert ks_2samp(a[:, 2], b[:, 2]).pvalue > 0.05


# ---------------------------------------------------------------- spec


def test_spec_invariants():
    cam = S.default_camera(64)
    with pytest.raises(S.SceneError):
        S.SceneSpec(cam, angular_w=4)
    with pytest.raises(S.SceneError):
        S.SceneSpec(cam, objects=(cylinder(t=(0, 0, 0.78)),))
    with pytest.raises(S.SceneError):
        S.SceneSpec(cam, objects=(cylinder(t=(0, 0, 0.05)),))
    with pytest.raises(S.SceneError):
        S.SceneSpec(cam, objects=(cylinder("a"), cylinder("a", t=(0.05, 0, 0.5))))


def test_spec_dict_round_trip():
    spec = S.planted_cylinder_spec(seed=3, noise_std=0.01)
    back = S.SceneSpec.from_dict(spec.to_dict())
    assert back.to_dict() == spec.to_dict()
    assert np.array_equal(S.render_lightfield(back).data, S.render_lightfield(spec).data)


# ---------------------------------------------------------------- light field


def test_background_epi_slope():
    cam = S.default_camera(96)
    lf = S.render_lightfield(S.SceneSpec(cam))
    delta = depth_to_disparity(cam, 0.8)
    for y in (15, 50, 80):
        epi = epi_slice_s(lf, y, lf.center_t).data[..., 0]
        shifts = [oracles.subpixel_shift(epi[:, 2], epi[:, s]) for s in range(5)]
        slope = np.polyfit(np.arange(5) - 2, shifts, 1)[0]
        assert slope == pytest.approx(delta, abs=0.05)


@pytest.mark.parametrize("seed", [0, 5])
def test_background_views_are_exact_shifts(seed):
    cam = S.default_camera(64)
    spec = S.SceneSpec(cam, background=S.BackgroundSpec(texture_seed=seed))
    lf = shear(S.render_lightfield(spec), depth_to_disparity(cam, spec.background.depth))
    c = lf.center_view()
    for t in range(5):
        for s in range(5):
            v = lf.valid[:, :, t, s]
            assert np.abs(lf.data[:, :, t, s][v] - c[v]).max() < 1e-3


def test_sparkles_raise_angular_variance():
    spec = S.planted_cylinder_spec(sparkle_rate=0.1, seed=1)
    out = S.render(spec)
    var = angular_variance(out.lightfield).data[..., 0]
    obj = out.seg == S.TRANSPARENT
    bg = out.seg == S.BACKGROUND
    # the background moves 0.6 px per view, so its variance is texture only
    assert np.median(var[obj]) >= 10 * np.median(var[bg])


def test_noise_is_seeded_and_clamped():
    spec = S.planted_cylinder_spec(noise_std=0.05, seed=2)
    a, b = S.render_lightfield(spec), S.render_lightfield(spec)
    assert np.array_equal(a.data, b.data)
    assert a.data.min() >= 0 and a.data.max() <= 1
    clean = S.render_lightfield(S.planted_cylinder_spec(seed=2))
    assert np.std(a.data - clean.data) == pytest.approx(0.05, rel=0.1)


# ---------------------------------------------------------------- segmentation


def test_no_objects_no_labels():
    assert not S.render_segmentation(S.SceneSpec(S.default_camera(32))).any()


def analytic_cylinder_area(cam, z0, r, h, n=4000):
    """Area of the convex hull of the projected rims; the projection of a convex solid is convex."""
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pts = []
    for y in (-h / 2, h / 2):
        x, z = r * np.cos(th), z0 + r * np.sin(th)
        pts.append(np.stack([cam.cx + cam.fx * x / z, cam.cy + cam.fy * y / z], axis=1))
    hull = ConvexHull(np.concatenate(pts))
    return hull.volume, hull.area  # 2-D: area, perimeter


def test_cylinder_silhouette_matches_analytic_area():
    cam = S.default_camera()
    spec = S.SceneSpec(cam, objects=(cylinder(),))
    seg = S.render_segmentation(spec)
    depth, _, _ = S.ray_cast(spec)
    pixels = np.isfinite(depth).sum()
    area, perimeter = analytic_cylinder_area(cam, 0.5, 0.04, 0.12)
    assert abs(pixels - area) <= perimeter
    # the band spans one pixel either side of the edge
    assert set(np.unique(seg)) == {0, 1, 2}
    assert ((seg == S.BOUNDARY) & ~np.isfinite(depth)).any()


def test_overlapping_objects_give_the_union():
    cam = S.default_camera(128)
    a, b = cylinder("a", (0.0, 0.0, 0.45)), cylinder("b", (0.03, 0.01, 0.6))
    both = S.render_segmentation(S.SceneSpec(cam, objects=(a, b)))
    sa = S.render_segmentation(S.SceneSpec(cam, objects=(a,))) > 0
    sb = S.render_segmentation(S.SceneSpec(cam, objects=(b,))) > 0
    assert (sa & sb).any()
    depth, ids, _ = S.ray_cast(S.SceneSpec(cam, objects=(a, b)))
    region = np.isfinite(depth)
    da, _, _ = S.ray_cast(S.SceneSpec(cam, objects=(a,)))
    db, _, _ = S.ray_cast(S.SceneSpec(cam, objects=(b,)))
    assert np.array_equal(region, np.isfinite(da) | np.isfinite(db))
    assert np.array_equal(both > 0, sa | sb)
    # the nearer object owns the overlap
    assert np.all(ids[np.isfinite(da)] == 0)


def test_gt_depth_uses_the_surface():
    out = S.render(S.planted_cylinder_spec())
    d = out.gt_depth
    assert d.max() == pytest.approx(0.8)
    on = out.object_ids >= 0
    assert d[on].min() == pytest.approx(0.5 - 0.04, abs=1e-3)


# ---------------------------------------------------------------- votes


def test_exact_votes_have_zero_loss(cylinder_scene):
    _, out = cylinder_scene
    assert center_offset_loss(out.votes[0], out.gt_center_px[0]) == pytest.approx(0, abs=1e-9)
    assert np.all(out.votes[0].confidences == 1)


def test_noisy_votes_center_on_truth():
    seg = np.zeros((64, 64), bool)
    seg[10:50, 20:44] = True
    g = np.array([31.5, 29.0])
    v = S.make_center_votes(seg, g, offset_noise_std=2.0, rng=4)
    n = len(v)
    assert np.all(np.abs(v.endpoints.mean(axis=0) - g) <= 3 * 2.0 / np.sqrt(n))
    assert v.endpoints.std(axis=0) == pytest.approx([2, 2], rel=0.1)


def test_residual_profile_is_the_confidence_target():
    seg = np.zeros((32, 32), bool)
    seg[5:20, 5:20] = True
    g = np.array([12.0, 12.0])
    v = S.make_center_votes(seg, g, 1.5, "residual", rng=1, tau=0.5)
    r = np.linalg.norm(g - v.endpoints, axis=1)
    assert np.allclose(v.confidences, confidence_target(r, 0.5), atol=1e-12)


def test_vote_errors_and_profiles():
    with pytest.raises(S.SceneError):
        S.make_center_votes(np.zeros((5, 5), bool), [2, 2])
    seg = np.ones((5, 5), bool)
    with pytest.raises(S.SceneError):
        S.make_center_votes(seg, [2, 2], confidence_profile="bogus")
    d = S.make_center_votes(seg, [2, 2], confidence_profile="distance", scale=10.0)
    assert d.confidences.max() == 1.0 and d.confidences.min() == pytest.approx(np.exp(-np.hypot(2, 2) / 10))


def test_render_is_deterministic(cylinder_scene):
    spec, out = cylinder_scene
    again = S.render(spec)
    assert np.array_equal(again.lightfield.data, out.lightfield.data)
    assert np.array_equal(again.seg, out.seg)
    assert np.array_equal(again.votes[0].offsets, out.votes[0].offsets)


def test_separable_texture_matches_direct_evaluation():
    tex = S.BackgroundTexture(S.BackgroundSpec(texture_seed=9))
    x, y = np.arange(40.0) - 3.3, np.arange(30.0) + 0.7
    X, Y = np.meshgrid(x, y)
    assert np.abs(tex.grid(x, y) - tex(X, Y)).max() < 1e-12
