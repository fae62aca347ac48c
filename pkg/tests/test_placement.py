import math

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from errors import PlacementError
from fixtures import make_fixture
from geometry import azimuth, rot_z
from models import BoundingBox, DetectionRegion, PlacementTarget, PointCloud
from placement_logic import boxes_intersect, crop_object, footprint_inside, place_box, place_object

UNIT_BOX = BoundingBox((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def _box_at(x, y, yaw=0.0, extent=(1.0, 1.0, 1.0)):
    return BoundingBox.from_yaw((x, y, 0.5), extent, yaw)


# ──────────────────────────────────────────────
# CROP
# ──────────────────────────────────────────────

def test_crop_interior_and_exterior():
    cloud = PointCloud(np.array([[0.4, 0.0, 0.0], [0.51, 0.0, 0.0], [0.0, -0.5, 0.5]]))
    cropped = crop_object(cloud, UNIT_BOX)
    np.testing.assert_array_equal(cropped.points, [[0.4, 0.0, 0.0], [0.0, -0.5, 0.5]])


def test_crop_rotated_box_keeps_face_points():
    box = BoundingBox.from_yaw((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), math.pi / 4)
    on_face = rot_z(math.pi / 4) @ np.array([0.5, 0.0, 0.0])
    outside = rot_z(math.pi / 4) @ np.array([0.5001, 0.0, 0.0])
    cropped = crop_object(PointCloud(np.vstack([on_face, outside])), box)
    assert len(cropped) == 1
    np.testing.assert_array_equal(cropped.points[0], on_face)


def test_crop_may_be_empty():
    assert len(crop_object(PointCloud(np.array([[5.0, 5.0, 5.0]])), UNIT_BOX)) == 0


# ──────────────────────────────────────────────
# PLACE
# ──────────────────────────────────────────────

def test_place_at_current_location_is_noop(rng):
    box = _box_at(5.0, 2.0, 0.3)
    pts = PointCloud(box.center + rng.uniform(-0.5, 0.5, (20, 3)))
    placed, placed_box = place_object(pts, box, PlacementTarget.at(5.0, 2.0))
    np.testing.assert_allclose(placed.points, pts.points, atol=1e-12)
    np.testing.assert_allclose(placed_box.center, box.center, atol=1e-12)
    np.testing.assert_allclose(placed_box.rotation, box.rotation, atol=1e-12)


def test_place_quarter_turn():
    box = BoundingBox((5.0, 0.0, 0.5), (1.0, 1.0, 1.0))
    placed, placed_box = place_object(PointCloud(np.array([[5.0, 0.0, 1.0]])), box, PlacementTarget.at(0.0, 5.0))
    np.testing.assert_allclose(placed.points[0], [0.0, 5.0, 1.0], atol=1e-12)
    assert placed_box.yaw == pytest.approx(math.pi / 2)


def test_place_pure_radial_translation(rng):
    box = BoundingBox((5.0, 0.0, 0.5), (1.0, 1.0, 1.0))
    pts = PointCloud(box.center + rng.uniform(-0.5, 0.5, (30, 3)))
    placed, placed_box = place_object(pts, box, PlacementTarget.at(10.0, 0.0))
    np.testing.assert_allclose(placed.points, pts.points + [5.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_array_equal(placed.points[:, 2], pts.points[:, 2])
    np.testing.assert_allclose(placed_box.center, [10.0, 0.0, 0.5], atol=1e-12)


def test_placed_center_follows_target(rng):
    box = _box_at(6.0, -1.5, 0.8, (2.0, 1.0, 1.0))
    for _ in range(50):
        x, y = rng.uniform(-20, 20, 2)
        placed = place_box(box, PlacementTarget.at(x, y))
        assert azimuth(placed.center) == pytest.approx(math.atan2(y, x), abs=1e-9)
        assert math.hypot(*placed.center[:2]) == pytest.approx(math.hypot(x, y), abs=1e-9)
        np.testing.assert_array_equal(placed.extent, box.extent)


def test_placement_is_rigid_and_keeps_height(rng):
    box = _box_at(4.0, 3.0, -0.2)
    pts = PointCloud(box.center + rng.uniform(-0.5, 0.5, (100, 3)))
    for _ in range(20):
        placed, _ = place_object(pts, box, PlacementTarget.at(*rng.uniform(1, 15, 2)))
        np.testing.assert_allclose(pdist(placed.points), pdist(pts.points), atol=1e-9)
        np.testing.assert_allclose(placed.points[:, 2], pts.points[:, 2], atol=1e-12)


def test_placement_composes(rng):
    box = _box_at(4.0, -2.0, 0.5)
    pts = PointCloud(box.center + rng.uniform(-0.5, 0.5, (40, 3)))
    first, second = PlacementTarget.at(9.0, 4.0), PlacementTarget.at(-3.0, 7.0)
    step, step_box = place_object(pts, box, first)
    twice, twice_box = place_object(step, step_box, second)
    direct, direct_box = place_object(pts, box, second)
    np.testing.assert_allclose(twice.points, direct.points, atol=1e-9)
    np.testing.assert_allclose(twice_box.rotation, direct_box.rotation, atol=1e-9)


def _line_of_sight_offsets(points, center):
    """Point offsets from the box center, in the frame whose x-axis points from the sensor to the center."""
    return (points - center) @ rot_z(-math.atan2(center[1], center[0])).T


def test_cone_keeps_facing_the_sensor(test_sensor, rng):
    cloud, box = make_fixture("cone", {"distance": 5.0}, test_sensor)
    reference = _line_of_sight_offsets(cloud.points, box.center)

    for _ in range(20):
        x, y = rng.uniform(2, 15), rng.uniform(-8, 8)
        placed, placed_box = place_object(cloud, box, PlacementTarget.at(x, y))
        np.testing.assert_allclose(_line_of_sight_offsets(placed.points, placed_box.center), reference, atol=1e-9)
        # cone axis keeps pointing away from the sensor
        axis = placed_box.rotation[:, 0]
        np.testing.assert_allclose(axis[:2], placed_box.center[:2] / math.hypot(*placed_box.center[:2]), atol=1e-9)


def test_naive_translation_turns_the_cone(test_sensor):
    cloud, box = make_fixture("cone", {"distance": 5.0}, test_sensor)
    reference = _line_of_sight_offsets(cloud.points, box.center)
    shift = np.array([0.0, 5.0, 0.0]) - np.array([box.center[0], box.center[1], 0.0])
    moved = cloud.points + shift
    offsets = _line_of_sight_offsets(moved, box.center + shift)
    assert np.max(np.abs(offsets - reference)) > 0.1


def test_target_at_origin_is_rejected():
    with pytest.raises(PlacementError, match="undefined placement direction"):
        PlacementTarget.at(0.0, 0.0)


def test_box_on_sensor_axis_cannot_be_placed():
    with pytest.raises(PlacementError, match="undefined placement direction"):
        place_box(BoundingBox((0.0, 0.0, 1.0), (1.0, 1.0, 1.0)), PlacementTarget.at(3.0, 0.0))


# ──────────────────────────────────────────────
# REGION / OVERLAP CHECKS
# ──────────────────────────────────────────────

def test_footprint_inside_region():
    region = DetectionRegion(0.0, 12.0, -4.625, 4.625, -1.0, 5.0)
    assert footprint_inside(_box_at(6.0, 0.0), region)
    assert not footprint_inside(_box_at(6.0, 4.3), region)
    assert not footprint_inside(_box_at(6.0, 4.0, math.pi / 4), region)


def test_boxes_intersect():
    a = _box_at(5.0, 0.0)
    assert boxes_intersect(a, _box_at(5.5, 0.5))
    assert not boxes_intersect(a, _box_at(7.0, 0.0))
    # rotated boxes whose axis-aligned hulls overlap but the boxes do not
    b = _box_at(6.1, 1.1, math.pi / 4)
    assert not boxes_intersect(a, b)
