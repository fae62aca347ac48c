import os
import sys

import numpy as np
import pytest

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.insert(0, ROOT)

from assembly_logic import CompositionParams  # noqa: E402
from beam_model import sensor_from_preset  # noqa: E402
from fixtures import get_shape, make_fixture, make_scene_fixture  # noqa: E402
from models import DetectionRegion, GroundRegion, SensorModel  # noqa: E402
from pcd_io import write_pcd  # noqa: E402

# Leveling windows that see only ground in the fixture scenes below
OBJECT_GROUND = GroundRegion(3.7, 4.8, 2.0)
BACKGROUND_GROUND = GroundRegion(3.3, 4.7, 4.0)


@pytest.fixture(scope="session")
def test_sensor():
    """Coarse 64 x 1024 grid; ground hits start about 3.2 m out."""
    return SensorModel.evenly_spaced("test-64", -25.0, 5.0, 64, 1024)


@pytest.fixture(scope="session")
def orchard_region():
    return DetectionRegion(0.0, 12.0, -4.625, 4.625, -1.0, 5.0)


@pytest.fixture(scope="session")
def params(test_sensor, orchard_region):
    return CompositionParams(
        region=orchard_region,
        sensor=test_sensor,
        object_ground_region=OBJECT_GROUND,
        background_ground_region=BACKGROUND_GROUND,
    )


@pytest.fixture(scope="session")
def plane_background(test_sensor):
    cloud, _ = make_fixture("plane", {"max_range": 30.0}, test_sensor)
    return cloud


@pytest.fixture(scope="session")
def object_scene():
    """Dense scan of a cone standing over flat ground, with its label box."""
    sensor = sensor_from_preset("os1-128")
    cloud = make_scene_fixture([("plane", {"max_range": 8.0}), ("cone", {})], sensor)
    return cloud, get_shape("cone").label()


@pytest.fixture
def write_stores(tmp_path):
    """Write PCDs plus background/object manifests under tmp_path; returns the two manifest paths."""

    def _write(backgrounds: dict, objects: dict, missing: tuple = ()):
        bg_lines, obj_lines = [], []
        for name, cloud in backgrounds.items():
            write_pcd(cloud, tmp_path / "backgrounds" / f"{name}.pcd")
            bg_lines.append(f"{name}\tbackgrounds/{name}.pcd\n")
        for name in missing:
            bg_lines.append(f"{name}\tbackgrounds/{name}.pcd\n")
        for name, (cloud, box) in objects.items():
            write_pcd(cloud, tmp_path / "objects" / f"{name}.pcd")
            values = [*box.center, *box.extent, box.yaw]
            obj_lines.append(f"{name}\tobjects/{name}.pcd\t{' '.join(repr(float(v)) for v in values)}\n")
        bg_manifest = tmp_path / "backgrounds.txt"
        obj_manifest = tmp_path / "objects.txt"
        bg_manifest.write_text("".join(bg_lines), encoding="utf-8")
        obj_manifest.write_text("".join(obj_lines), encoding="utf-8")
        return bg_manifest, obj_manifest

    return _write


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
