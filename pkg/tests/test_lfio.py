import json

import cv2
import numpy as np
import pytest

from plenopose import lfio
from plenopose.lightfield import CameraModel, LightField4D


@pytest.fixture
def stored(tmp_path, rng):
    lf = LightField4D(rng.random((32, 32, 5, 5, 3)))
    cam = CameraModel(250.0, 250.0, 16.0, 16.0, 0.001, 32, 32)
    lfio.store_lightfield(lf, tmp_path / "lf", cam)
    return lf, cam, tmp_path / "lf"


def _edit_meta(path, **changes):
    meta = json.loads((path / lfio.METADATA_NAME).read_text())
    meta.update(changes)
    (path / lfio.METADATA_NAME).write_text(json.dumps(meta))


def test_round_trip_within_quantization(stored):
    lf, cam, path = stored
    back = lfio.load_lightfield(path)
    assert back.data.shape == lf.data.shape
    assert np.abs(back.data - lf.data).max() <= 1 / 65535
    assert lfio.load_camera(path) == cam


def test_stored_layout(stored):
    lf, cam, path = stored
    meta = json.loads((path / lfio.METADATA_NAME).read_text())
    assert meta["bit_depth"] == 16
    assert meta["baseline_m"] == cam.baseline
    img = cv2.imread(str(path / "view_1_3.png"), cv2.IMREAD_UNCHANGED)
    assert img.dtype == np.uint16 and img.shape == (32, 32, 3)
    # PNG is RGB on disk; OpenCV hands it back as BGR
    assert np.array_equal(img[:, :, ::-1], np.round(lf.data[:, :, 1, 3] * 65535).astype(np.uint16))


def test_quantized_field_round_trips_exactly(tmp_path, rng):
    data = rng.integers(0, 65536, size=(6, 7, 3, 3, 3)) / 65535.0
    lfio.store_lightfield(LightField4D(data), tmp_path)
    assert np.array_equal(lfio.load_lightfield(tmp_path).data, data)
    assert lfio.load_camera(tmp_path) is None


def test_missing_view_is_named(stored):
    _, _, path = stored
    (path / "view_2_3.png").unlink()
    with pytest.raises(lfio.MissingViewError, match="view_2_3.png"):
        lfio.load_lightfield(path)


def test_even_angular_width_rejected(stored):
    _, _, path = stored
    _edit_meta(path, angular_w=4)
    with pytest.raises(lfio.MetadataError, match="angular_w"):
        lfio.load_lightfield(path)


def test_wrong_view_size_rejected(stored):
    _, _, path = stored
    _edit_meta(path, spatial_w=31)
    with pytest.raises(lfio.DimensionMismatchError):
        lfio.load_lightfield(path)


@pytest.mark.parametrize("change", [{"bit_depth": 12}, {"spatial_h": 0}, {"angular_h": "5"}])
def test_bad_metadata_values(stored, change):
    _, _, path = stored
    _edit_meta(path, **change)
    with pytest.raises(lfio.MetadataError):
        lfio.load_lightfield(path)


def test_missing_or_malformed_metadata(stored, tmp_path):
    _, _, path = stored
    meta = json.loads((path / lfio.METADATA_NAME).read_text())
    del meta["bit_depth"]
    (path / lfio.METADATA_NAME).write_text(json.dumps(meta))
    with pytest.raises(lfio.MetadataError, match="bit_depth"):
        lfio.load_lightfield(path)
    (path / lfio.METADATA_NAME).write_text("{not json")
    with pytest.raises(lfio.MetadataError):
        lfio.load_lightfield(path)
    with pytest.raises(lfio.MetadataError):
        lfio.load_lightfield(tmp_path / "nowhere")


def test_grayscale_view_rejected(stored):
    _, _, path = stored
    cv2.imwrite(str(path / "view_0_0.png"), np.zeros((32, 32), np.uint16))
    with pytest.raises(lfio.DimensionMismatchError):
        lfio.load_lightfield(path)


def test_error_classes_are_distinct():
    kinds = {lfio.MissingViewError, lfio.DimensionMismatchError, lfio.MetadataError}
    assert len(kinds) == 3
    assert all(issubclass(k, lfio.ContainerError) for k in kinds)


def test_eight_bit_containers_load(tmp_path, rng):
    data = rng.integers(0, 256, size=(4, 5, 3, 3, 3)).astype(np.uint8)
    for t in range(3):
        for s in range(3):
            cv2.imwrite(str(tmp_path / lfio.view_filename(t, s)), data[:, :, t, s, ::-1])
    meta = {"spatial_h": 4, "spatial_w": 5, "angular_h": 3, "angular_w": 3, "bit_depth": 8}
    (tmp_path / lfio.METADATA_NAME).write_text(json.dumps(meta))
    assert np.array_equal(lfio.load_lightfield(tmp_path).data, data / 255.0)
