import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plenopose import lightfield as L
from plenopose import scene
from tests import oracles


def constant_lf(value=0.5, shape=(6, 7, 3, 5)):
    return L.LightField4D(np.full(shape + (3,), value))


def random_lf(rng, h=12, w=14, ah=5, aw=5):
    return L.LightField4D(rng.random((h, w, ah, aw, 3)))


# ---------------------------------------------------------------- container


def test_center_indices_and_dims():
    lf = constant_lf(shape=(4, 6, 3, 5))
    assert (lf.spatial_h, lf.spatial_w, lf.angular_h, lf.angular_w) == (4, 6, 3, 5)
    assert (lf.center_s, lf.center_t) == (2, 1)


@pytest.mark.parametrize("shape", [(4, 4, 2, 3, 3), (4, 4, 3, 4, 3), (4, 4, 3, 3, 1), (4, 4, 3, 3)])
def test_invalid_shapes_rejected(shape):
    with pytest.raises(L.LightFieldError):
        L.LightField4D(np.zeros(shape))


@pytest.mark.parametrize("bad", [np.nan, -0.1, 1.5])
def test_out_of_range_samples_rejected(bad):
    data = np.zeros((3, 3, 3, 3, 3))
    data[1, 1, 1, 1, 1] = bad
    with pytest.raises(L.LightFieldError):
        L.LightField4D(data)


def test_data_is_read_only():
    lf = constant_lf()
    with pytest.raises(ValueError):
        lf.data[0, 0, 0, 0, 0] = 1.0


def test_camera_invariants():
    with pytest.raises(L.LightFieldError):
        L.CameraModel(0, 500, 10, 10, 0.001, 20, 20)
    with pytest.raises(L.LightFieldError):
        L.CameraModel(500, 500, 20, 10, 0.001, 20, 20)
    cam = L.CameraModel(500, 400, 10, 9, 0.001, 20, 20)
    assert L.CameraModel.from_dict(cam.to_dict()) == cam
    assert np.array_equal(cam.K, [[500, 0, 10], [0, 400, 9], [0, 0, 1]])


# ---------------------------------------------------------------- accessors


def test_constant_field_gives_constant_view():
    view = L.subaperture_view(constant_lf(0.5), 1, 2)
    assert np.all(view == 0.5)


def test_view_round_trip_is_exact(rng):
    views = [[rng.random((6, 8, 3)) for s in range(5)] for t in range(5)]
    lf = L.LightField4D.from_views(views)
    for t in range(5):
        for s in range(5):
            assert np.array_equal(L.subaperture_view(lf, s, t), views[t][s])


@pytest.mark.parametrize("s,t,axis", [(5, 0, "s"), (-1, 0, "s"), (0, 5, "t")])
def test_view_index_errors_name_axis(s, t, axis):
    lf = constant_lf(shape=(4, 4, 5, 5))
    with pytest.raises(IndexError, match=f"^{axis}="):
        L.subaperture_view(lf, s, t)


def test_subsample_stride_two_keeps_even_views(rng):
    lf = random_lf(rng, 4, 5, 9, 9)
    sub = L.subsample_angular(lf, 2)
    assert (sub.angular_h, sub.angular_w) == (5, 5)
    for i in range(5):
        for j in range(5):
            assert np.array_equal(L.subaperture_view(sub, i, j), L.subaperture_view(lf, 2 * i, 2 * j))


def test_angular_patch_layout():
    views = [[np.full((4, 4, 3), (s + t) / 8) for s in range(3)] for t in range(3)]
    lf = L.LightField4D.from_views(views)
    patch = L.angular_patch(lf, 2, 1)
    assert patch.shape == (3, 3, 3)
    for t in range(3):
        for s in range(3):
            assert np.all(patch[t, s] == (s + t) / 8)
    assert sorted(set(patch[..., 0].ravel().tolist())) == [k / 8 for k in range(5)]


def test_angular_patch_bounds():
    lf = constant_lf(shape=(4, 6, 3, 3))
    with pytest.raises(IndexError):
        L.angular_patch(lf, 6, 0)
    with pytest.raises(IndexError):
        L.angular_patch(lf, 0, 4)


def test_lambertian_patch_is_constant(plane_scene):
    _, out = plane_scene
    lf = out.lightfield
    sheared = L.shear(lf, 1.0)  # the plane's disparity
    ok = sheared.validity.all(axis=(2, 3))
    ys, xs = np.nonzero(ok)
    for y, x in list(zip(ys, xs))[::97]:
        patch = L.angular_patch(sheared, x, y)
        assert patch.reshape(-1, 3).var(axis=0).max() < 1e-12


def test_epi_slices_shapes_and_content(rng):
    lf = random_lf(rng, 6, 7, 3, 5)
    e = L.epi_slice_s(lf, 2, 1)
    assert e.orientation == "s" and e.data.shape == (7, 5, 3)
    assert np.array_equal(e.data[4, 3], lf.data[2, 4, 1, 3])
    e = L.epi_slice_t(lf, 3, 4)
    assert e.orientation == "t" and e.data.shape == (6, 3, 3)
    assert np.array_equal(e.data[5, 2], lf.data[5, 3, 2, 4])
    assert L.epi_slice_s(constant_lf(shape=(4, 4, 5, 5)), 0, 0).data.shape[1] == 5
    c = L.epi_slice_t(constant_lf(0.25), 0, 0).data
    assert np.all(c == 0.25)
    with pytest.raises(IndexError):
        L.epi_slice_s(lf, 6, 0)
    with pytest.raises(IndexError):
        L.epi_slice_t(lf, 0, 5)


def test_epi_line_slope_matches_disparity():
    cam = scene.default_camera(96)
    depth = 0.4
    delta = L.depth_to_disparity(cam, depth)  # 1.25 px
    spec = scene.planted_plane_spec(depth, seed=2, camera=cam)
    lf = scene.render_lightfield(spec)
    slopes = []
    for y in (20, 48, 70):
        epi = L.epi_slice_s(lf, y, lf.center_t).data[..., 1]
        ref = epi[:, lf.center_s]
        pts = [(s - lf.center_s, oracles.subpixel_shift(ref, epi[:, s])) for s in range(lf.angular_w)]
        a = np.array(pts)
        slopes.append(np.polyfit(a[:, 0], a[:, 1], 1)[0])
    assert np.allclose(slopes, delta, atol=0.05)


# ---------------------------------------------------------------- geometry


def test_disparity_arithmetic():
    cam = L.CameraModel(500, 500, 50, 50, 0.001, 100, 100)
    assert L.depth_to_disparity(cam, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert L.depth_to_disparity(cam, 1e9) < 1e-5
    d = np.array([0.2, 0.3, 0.7, 2.0])
    disp = L.depth_to_disparity(cam, d)
    assert np.all(np.diff(disp) < 0)
    assert np.allclose(disp * d, cam.fx * cam.baseline)
    assert np.allclose(L.disparity_to_depth(cam, disp), d)
    with pytest.raises(L.LightFieldError):
        L.depth_to_disparity(cam, 0.0)
    with pytest.raises(L.LightFieldError):
        L.depth_to_disparity(cam, [-1.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0), st.floats(0.01, 100.0))
def test_disparity_strictly_decreasing(d1, d2):
    cam = L.CameraModel(500, 500, 50, 50, 0.001, 100, 100)
    if d1 < d2:
        assert L.depth_to_disparity(cam, d1) > L.depth_to_disparity(cam, d2)


# ---------------------------------------------------------------- shear


def test_zero_shear_is_identity(rng):
    lf = random_lf(rng)
    out = L.shear(lf, 0.0)
    assert np.array_equal(out.data, lf.data)
    assert out.validity.all()


def test_integer_shear_is_reindexing(rng):
    lf = random_lf(rng, 10, 11, 3, 3)
    out = L.shear(lf, 2.0)
    for t in range(3):
        for s in range(3):
            dx, dy = 2 * (s - 1), 2 * (t - 1)
            for y in range(10):
                for x in range(11):
                    ok = 0 <= y + dy < 10 and 0 <= x + dx < 11
                    assert out.valid[y, x, t, s] == ok
                    if ok:
                        assert np.array_equal(out.data[y, x, t, s], lf.data[y + dy, x + dx, t, s])


def test_fractional_shear_matches_pointwise_bilinear(rng):
    lf = random_lf(rng, 9, 10, 3, 3)
    d = 0.37
    out = L.shear(lf, d)
    for t in range(3):
        for s in range(3):
            img = lf.data[:, :, t, s]
            for y in range(9):
                for x in range(10):
                    ref = oracles.bilinear_at(img, x + d * (s - 1), y + d * (t - 1))
                    assert out.valid[y, x, t, s] == (ref is not None)
                    if ref is not None:
                        assert np.allclose(out.data[y, x, t, s], ref, atol=1e-12)


def test_center_view_unchanged_by_shear(rng):
    lf = random_lf(rng)
    out = L.shear(lf, 0.8)
    assert np.array_equal(out.center_view(), lf.center_view())


def test_shear_by_plane_disparity_aligns_views(plane_scene):
    _, out = plane_scene
    sheared = L.shear(out.lightfield, 1.0)
    center = sheared.center_view()
    for t in range(5):
        for s in range(5):
            v = sheared.valid[:, :, t, s]
            assert np.abs(sheared.data[:, :, t, s][v] - center[v]).max() < 1e-3


def test_shear_fractional_plane_within_tolerance():
    cam = scene.default_camera(64)
    spec = scene.planted_plane_spec(0.6, seed=1, camera=cam)
    lf = scene.render_lightfield(spec)
    d = L.depth_to_disparity(cam, 0.6)
    sheared = L.shear(lf, d)
    center = sheared.center_view()
    err = max(np.abs(sheared.data[:, :, t, s][sheared.valid[:, :, t, s]]
                     - center[sheared.valid[:, :, t, s]]).max() for t in range(5) for s in range(5))
    assert err < 1e-3


def test_shear_there_and_back(rng):
    cam = scene.default_camera(64)
    lf = scene.render_lightfield(scene.planted_plane_spec(0.45, seed=3, camera=cam))
    back = L.shear(L.shear(lf, 0.6), -0.6)
    v = back.valid
    assert v.any()
    assert np.abs(back.data[v] - lf.data[v]).max() < 2e-3


def test_shear_rejects_excessive_disparity(rng):
    lf = random_lf(rng, 8, 8, 5, 5)
    with pytest.raises(L.LightFieldError):
        L.shear(lf, 4.0)


def test_shear_propagates_invalid_samples(rng):
    lf = random_lf(rng, 8, 8, 3, 3)
    once = L.shear(lf, 1.0)
    twice = L.shear(once, 1.0)
    # the outer views lose two pixels of support after two unit shears
    assert not twice.valid[:, -2:, 1, 2].any()
    assert twice.valid[:, :-2, 1, 2].all()


@settings(max_examples=20, deadline=None)
@given(st.floats(-1.5, 1.5))
def test_shift_image_values_stay_in_hull(d):
    rng = np.random.default_rng(0)
    img = rng.random((7, 9))
    out, valid = L.shift_image(img, d, -d / 2)
    if valid.any():
        assert out[valid].min() >= img.min() - 1e-12
        assert out[valid].max() <= img.max() + 1e-12
    assert np.all(out[~valid] == 0)
