import logging
import math

import numpy as np
import pytest
from pydantic import ValidationError

from beam_model import beam_directions, sensor_from_preset
from fixtures import get_shape, make_fixture, make_scene_fixture
from geometry import ranges


def test_plane_points_lie_on_the_plane():
    cloud, box = make_fixture("plane", {"height": -1.5}, sensor_from_preset("os1-128"))
    assert box is None
    assert len(cloud) > 0
    np.testing.assert_allclose(cloud.points[:, 2], -1.5, atol=1e-9)
    assert ranges(cloud.points).max() <= 40.0 + 1e-9


def test_tilted_plane(test_sensor):
    cloud, _ = make_fixture("plane", {"height": -1.5, "slope_x": 0.05, "slope_y": -0.02}, test_sensor)
    pts = cloud.points
    np.testing.assert_allclose(pts[:, 2], -1.5 + 0.05 * pts[:, 0] - 0.02 * pts[:, 1], atol=1e-9)


def test_plane_through_the_sensor_is_empty(test_sensor, caplog):
    with caplog.at_level(logging.WARNING):
        cloud, _ = make_fixture("plane", {"height": 0.0}, test_sensor)
    assert len(cloud) == 0
    assert "empty cloud" in caplog.text


def test_cone_shows_only_its_base_disk():
    cloud, box = make_fixture("cone", {"distance": 5.0}, sensor_from_preset("os1-128"))
    assert len(cloud) > 500
    np.testing.assert_allclose(cloud.points[:, 0], 5.0, atol=1e-9)
    offsets = cloud.points - np.array([5.0, 0.0, -0.9])
    assert np.all(np.linalg.norm(offsets, axis=1) <= 0.5 + 1e-9)
    np.testing.assert_allclose(box.center, [5.5, 0.0, -0.9])
    np.testing.assert_allclose(box.extent, [1.0, 1.0, 1.0])


def test_turned_cone_faces_the_sensor(test_sensor):
    cloud, box = make_fixture("cone", {"distance": 6.0, "azimuth": 45.0}, test_sensor)
    axis = np.array([math.cos(math.radians(45)), math.sin(math.radians(45)), 0.0])
    np.testing.assert_allclose(cloud.points @ axis, 6.0, atol=1e-9)
    assert box.yaw == pytest.approx(math.radians(45))


def test_wall_is_a_flat_rectangle(test_sensor):
    cloud, box = make_fixture("wall", {"distance": 4.0, "width": 2.0, "z_min": -1.0, "z_max": 1.0}, test_sensor)
    assert box is None
    np.testing.assert_allclose(cloud.points[:, 0], 4.0, atol=1e-9)
    assert np.all(np.abs(cloud.points[:, 1]) <= 1.0 + 1e-9)
    assert np.all((cloud.points[:, 2] >= -1.0 - 1e-9) & (cloud.points[:, 2] <= 1.0 + 1e-9))


def test_sphere_point_count_matches_solid_angle():
    sensor = sensor_from_preset("os1-128")
    distance, radius = 5.0, 0.5
    cloud, box = make_fixture("sphere", {"distance": distance, "radius": radius}, sensor)

    solid_angle = 2 * math.pi * (1 - math.cos(math.asin(radius / distance)))
    d_az = 2 * math.pi / sensor.azimuth_count
    d_el = math.radians(sensor.elevation_angles[1] - sensor.elevation_angles[0])
    expected = solid_angle / (d_az * d_el)
    assert abs(len(cloud) - expected) < 0.2 * expected
    np.testing.assert_allclose(np.linalg.norm(cloud.points - box.center, axis=1), radius, atol=1e-9)


def test_points_follow_beam_order(test_sensor):
    shape = get_shape("sphere", {"distance": 5.0})
    grid = beam_directions(test_sensor)
    t = shape.hit_distances(grid.directions)
    hit = np.flatnonzero(np.isfinite(t))
    cloud = shape.render(test_sensor)
    np.testing.assert_allclose(cloud.points, grid.directions[hit] * t[hit, None])


def test_scene_fixture_keeps_nearest_hit(test_sensor):
    wall = {"distance": 4.0, "width": 1.0, "z_min": -1.0, "z_max": 1.0}
    scene = make_scene_fixture([("wall", wall), ("wall", {**wall, "distance": 8.0, "width": 6.0})], test_sensor)
    near, _ = make_fixture("wall", wall, test_sensor)
    far = scene.points[scene.points[:, 0] > 6.0]
    assert np.sum(scene.points[:, 0] < 6.0) == len(near)
    assert len(far) > 0
    # the near wall shadows |y| <= 1, |z| <= 1 on the far one
    assert not np.any((np.abs(far[:, 1]) < 0.9) & (np.abs(far[:, 2]) < 0.9))


def test_unknown_kind_and_bad_params(test_sensor):
    with pytest.raises(ValueError, match="Unknown fixture kind"):
        get_shape("torus")
    with pytest.raises(ValidationError):
        get_shape("sphere", {"distance": 0.2, "radius": 0.5})
    with pytest.raises(ValidationError):
        get_shape("cone", {"colour": 1.0})
    with pytest.raises(ValueError):
        make_scene_fixture([], test_sensor)
