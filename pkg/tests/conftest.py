import numpy as np
import pytest

from plenopose import scene


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_cam():
    return scene.default_camera(64)


@pytest.fixture(scope="session")
def plane_scene(small_cam):
    """Fronto-parallel textured plane at 0.5 m (disparity 1 px per view)."""
    spec = scene.planted_plane_spec(0.5, seed=4, camera=small_cam)
    return spec, scene.render(spec)


@pytest.fixture(scope="session")
def cylinder_scene():
    spec = scene.planted_cylinder_spec(seed=0)
    return spec, scene.render(spec)


def pytest_terminal_summary(terminalreporter):
    from tests.test_acceptance import VERDICTS

    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
