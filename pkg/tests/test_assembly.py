import dataclasses

import numpy as np
import pytest
from scipy.spatial import cKDTree

from assembly_logic import (
    ObjectSample, StageTimer, compose_multi, compose_single, expand_scene, prepare_background, prepare_object,
    rasterize_centers,
)
from beam_model import beam_directions, resample_object
from errors import CompositionError, GeometryError, SceneRecordError
from fixtures import make_fixture, make_scene_fixture
from geometry import azimuths, mirror_x, ranges
from leveling_logic import unlevel, unlevel_box
from models import BoundingBox, ComposedScene, DetectionRegion, PlacementTarget, PointCloud, SensorModel, mirror_box
from occlusion_logic import occluded_mask
from placement_logic import place_object
from scene_store import encode_scene


@pytest.fixture(scope="module")
def short_background(test_sensor):
    """Ground that ends 7 m out: nothing behind objects placed farther away."""
    cloud, _ = make_fixture("plane", {"max_range": 7.0}, test_sensor)
    return cloud


@pytest.fixture(scope="module")
def walled_background(test_sensor):
    wall = {"distance": 5.0, "width": 3.0, "z_min": -1.4, "z_max": 1.0}
    return make_scene_fixture([("plane", {"max_range": 30.0}), ("wall", wall)], test_sensor)


def _compose(background, object_scene, params, x, y, object_id="cone"):
    cloud, box = object_scene
    return compose_single(background, cloud, box, PlacementTarget.at(x, y), params, "bg", object_id)


def _sample(object_scene, object_id="cone"):
    cloud, box = object_scene
    return ObjectSample(cloud, box, object_id)


def _monolithic(background, object_scene, params, targets):
    """Full-cloud reference: no sector windows, the whole composite is rebuilt for every object."""
    cloud, box = object_scene
    bg_transform = prepare_background(background, params)
    prepared = prepare_object(cloud, box, params)
    alive = np.ones(len(background), dtype=bool)
    objects = []
    for target in sorted(targets, key=lambda t: t.ground_distance):
        placed, _ = place_object(prepared.points, prepared.box, target)
        obj = resample_object(unlevel(placed, bg_transform), beam_directions(params.sensor),
                              params.beam_threshold).points
        bg = background.points[alive]
        composite = np.vstack([bg] + objects)
        obj_r, comp_r = ranges(obj), ranges(composite)
        kept = ~occluded_mask(obj, composite[comp_r <= obj_r.max()], params.object_threshold)
        dropped = occluded_mask(composite, obj, params.background_threshold) & (comp_r >= obj_r.min())

        alive[np.flatnonzero(alive)[dropped[:len(bg)]]] = False
        offset, survivors = len(bg), []
        for pts in objects:
            survivors.append(pts[~dropped[offset:offset + len(pts)]])
            offset += len(pts)
        objects = survivors + [obj[kept]]
    rounded = [pts.astype(np.float32).astype(np.float64) for pts in objects]
    return np.vstack([background.points[alive]] + rounded)


# ──────────────────────────────────────────────
# SINGLE OBJECT
# ──────────────────────────────────────────────

def test_object_in_empty_sector_only_adds_points(short_background, object_scene, params):
    scene = _compose(short_background, object_scene, params, 9.0, 0.0)

    assert scene.background_dropped.size == 0
    assert len(scene.object_points) > 0
    assert scene.expanded_size() == len(short_background) + len(scene.object_points)
    assert scene.object_ids == ("cone",)
    assert scene.targets == ((9.0, 0.0),)
    assert scene.warnings == ()

    (label,) = scene.boxes
    np.testing.assert_allclose(label.center, [9.0, 0.0, -0.9], atol=1e-5)
    assert label.yaw == pytest.approx(0.0, abs=1e-6)
    # the visible disk moved from 5 m to 8.5 m
    np.testing.assert_allclose(scene.object_points.points[:, 0], 8.5, atol=0.05)
    assert np.all(scene.object_points.points[:, 2] >= -1.5 - params.object_threshold)


def test_same_inputs_give_identical_records(plane_background, object_scene, params):
    first = encode_scene(_compose(plane_background, object_scene, params, 7.0, 2.0))
    second = encode_scene(_compose(plane_background, object_scene, params, 7.0, 2.0))
    assert first == second


def test_object_behind_wall_is_hidden(walled_background, object_scene, params):
    scene = _compose(walled_background, object_scene, params, 10.0, 0.0)
    assert len(scene.object_points) == 0
    assert "object 'cone' fully occluded" in scene.warnings
    assert len(scene.boxes) == 1


def test_background_behind_object_is_dropped(plane_background, object_scene, params):
    scene = _compose(plane_background, object_scene, params, 8.0, 0.0)
    assert scene.background_dropped.size > 0
    dropped = plane_background.points[scene.background_dropped]
    assert np.all(np.abs(azimuths(dropped)) < 0.1)
    assert np.all(ranges(dropped) > 7.0)


@pytest.mark.parametrize("x,y", [(8.0, 2.0), (6.0, -3.0), (11.0, 0.0)])
def test_compact_scene_expands_to_full_reference(plane_background, object_scene, params, x, y):
    scene = _compose(plane_background, object_scene, params, x, y)
    expected = _monolithic(plane_background, object_scene, params, [PlacementTarget.at(x, y)])
    np.testing.assert_array_equal(expand_scene(scene, plane_background).points, expected)


def test_mirrored_inputs_give_mirrored_scene(plane_background, object_scene, params):
    cloud, box = object_scene
    for x, y in [(8.0, 2.0), (6.0, -3.0)]:
        scene = _compose(plane_background, object_scene, params, x, y)
        flipped = compose_single(mirror_x(plane_background), mirror_x(cloud), mirror_box(box),
                                 PlacementTarget.at(x, -y), params)

        expected = mirror_x(expand_scene(scene, plane_background)).points
        actual = expand_scene(flipped, mirror_x(plane_background)).points
        assert actual.shape == expected.shape
        assert cKDTree(expected).query(actual)[0].max() < 1e-6
        assert cKDTree(actual).query(expected)[0].max() < 1e-6

        (label,), (flipped_label,) = scene.boxes, flipped.boxes
        np.testing.assert_allclose(flipped_label.center, label.center * [1.0, -1.0, 1.0], atol=1e-5)
        assert flipped_label.yaw == pytest.approx(-label.yaw, abs=1e-5)


def test_label_heading_follows_background_tilt(test_sensor, object_scene, params):
    cloud, box = object_scene
    tilted, _ = make_fixture("plane", {"max_range": 30.0, "slope_y": 0.15}, test_sensor)
    target = PlacementTarget.at(8.0, 2.0)
    scene = compose_single(tilted, cloud, box, target, params)

    prepared = prepare_object(cloud, box, params)
    _, leveled = place_object(prepared.points, prepared.box, target)
    world = unlevel_box(leveled, prepare_background(tilted, params))
    (label,) = scene.boxes
    assert label.yaw == pytest.approx(float(np.float32(world.yaw)), abs=1e-6)
    assert abs(label.yaw - leveled.yaw) > 1e-3


def test_label_center_checked_at_stored_precision(plane_background, object_scene, params):
    # 4.6 is not a float32 value; the stored bound rounds down to 4.5999999
    narrow = dataclasses.replace(params, region=DetectionRegion(0.0, 12.0, -4.6, 4.6, -1.0, 5.0))
    with pytest.raises(CompositionError) as e:
        _compose(plane_background, object_scene, narrow, 6.0, 4.59999996)
    assert e.value.reason == "placement outside detection region"


def test_stage_timer_collects_every_stage(plane_background, object_scene, params):
    cloud, box = object_scene
    timer = StageTimer()
    compose_single(plane_background, cloud, box, PlacementTarget.at(7.0, 1.0), params, timer=timer)
    assert {"level_background", "level_object", "place", "resample", "occlude"} <= set(timer.samples)
    assert timer.total() == pytest.approx(sum(timer.totals().values()))


# ──────────────────────────────────────────────
# FAILURES NAME THEIR STAGE
# ──────────────────────────────────────────────

def test_background_without_ground(object_scene, params):
    far = PointCloud(np.array([[50.0, 0.0, 0.0], [51.0, 1.0, 0.0]]))
    with pytest.raises(CompositionError) as e:
        _compose(far, object_scene, params, 8.0, 0.0)
    assert e.value.stage == "level_background"


def test_object_scene_without_ground(plane_background, test_sensor, params):
    cone, box = make_fixture("cone", {}, test_sensor)
    with pytest.raises(CompositionError) as e:
        compose_single(plane_background, cone, box, PlacementTarget.at(8.0, 0.0), params)
    assert e.value.stage == "level_object"


def test_box_around_nothing(plane_background, object_scene, params):
    cloud, _ = object_scene
    empty_box = BoundingBox((5.5, 3.0, 2.0), (0.5, 0.5, 0.5))
    with pytest.raises(CompositionError, match=r"\[crop\] empty cropped object"):
        compose_single(plane_background, cloud, empty_box, PlacementTarget.at(8.0, 0.0), params)


def test_target_outside_region(plane_background, object_scene, params):
    with pytest.raises(CompositionError) as e:
        _compose(plane_background, object_scene, params, 13.0, 0.0)
    assert e.value.stage == "place"
    assert e.value.reason == "placement outside detection region"


def test_object_below_every_beam(plane_background, object_scene, params):
    skyward = dataclasses.replace(params, sensor=SensorModel.evenly_spaced("up", 10.0, 20.0, 4, 64))
    with pytest.raises(CompositionError) as e:
        _compose(plane_background, object_scene, skyward, 8.0, 0.0)
    assert e.value.stage == "resample"


# ──────────────────────────────────────────────
# SEVERAL OBJECTS
# ──────────────────────────────────────────────

def test_disjoint_sectors_compose_independently(plane_background, object_scene, params):
    a, b = PlacementTarget.at(6.0, 3.0), PlacementTarget.at(8.0, -3.0)
    only_a = _compose(plane_background, object_scene, params, 6.0, 3.0)
    only_b = _compose(plane_background, object_scene, params, 8.0, -3.0)
    both = compose_multi(plane_background, [_sample(object_scene, "a"), _sample(object_scene, "b")], [a, b], params)

    np.testing.assert_array_equal(both.object_points.points,
                                  np.vstack([only_a.object_points.points, only_b.object_points.points]))
    np.testing.assert_array_equal(both.background_dropped,
                                  np.union1d(only_a.background_dropped, only_b.background_dropped))
    assert both.object_ids == ("a", "b")
    np.testing.assert_array_equal(both.boxes[0].center, only_a.boxes[0].center)
    np.testing.assert_array_equal(both.boxes[1].center, only_b.boxes[0].center)


def test_nearer_object_occludes_farther_one(plane_background, object_scene, params):
    far, near = PlacementTarget.at(10.0, 0.0), PlacementTarget.at(5.0, 0.0)
    alone = _compose(plane_background, object_scene, params, 10.0, 0.0)
    both = compose_multi(plane_background, [_sample(object_scene, "far"), _sample(object_scene, "near")],
                         [far, near], params)

    # composed nearest first
    assert both.object_ids == ("near", "far")
    far_alone = np.sum(alone.object_points.points[:, 0] > 9.0)
    far_together = np.sum(both.object_points.points[:, 0] > 9.0)
    assert 0 < far_together < far_alone


@pytest.mark.parametrize("first,second", [((10.0, 0.0), (5.0, 0.0)), ((6.0, 3.0), (8.0, -3.0)),
                                          ((7.0, -1.0), (9.5, 1.5))])
def test_compact_multi_object_scene_expands_to_full_reference(plane_background, object_scene, params,
                                                              first, second):
    targets = [PlacementTarget.at(*first), PlacementTarget.at(*second)]
    scene = compose_multi(plane_background, [_sample(object_scene, "a"), _sample(object_scene, "b")],
                          targets, params)
    assert len(scene.boxes) == 2
    expected = _monolithic(plane_background, object_scene, params, targets)
    np.testing.assert_array_equal(expand_scene(scene, plane_background).points, expected)


def test_overlapping_placement_is_skipped(plane_background, object_scene, params):
    targets = [PlacementTarget.at(7.0, 0.0), PlacementTarget.at(7.3, 0.2)]
    samples = [_sample(object_scene, "first"), _sample(object_scene, "second")]
    scene = compose_multi(plane_background, samples, targets, params)
    assert scene.object_ids == ("first",)
    assert len(scene.boxes) == 1
    assert any("second" in w and "overlaps" in w for w in scene.warnings)

    with pytest.raises(CompositionError) as e:
        compose_multi(plane_background, samples, targets, dataclasses.replace(params, strict=True))
    assert e.value.stage == "place"


def test_zero_objects(plane_background, params):
    with pytest.raises(CompositionError, match=r"\[input\] no objects to compose"):
        compose_multi(plane_background, [], [], dataclasses.replace(params, strict=True))
    scene = compose_multi(plane_background, [], [], params, "bg")
    assert scene.boxes == ()
    assert scene.background_dropped.size == 0
    np.testing.assert_array_equal(expand_scene(scene, plane_background).points, plane_background.points)


def test_objects_and_targets_must_pair_up(plane_background, object_scene, params):
    with pytest.raises(CompositionError, match="input"):
        compose_multi(plane_background, [_sample(object_scene)], [], params)


def test_expand_checks_background_size(plane_background, short_background, object_scene, params):
    scene = _compose(plane_background, object_scene, params, 8.0, 1.0)
    with pytest.raises(SceneRecordError):
        expand_scene(scene, short_background)


# ──────────────────────────────────────────────
# CENTER GRID
# ──────────────────────────────────────────────

def _box(x, y):
    return BoundingBox((x, y, 0.0), (1.0, 1.0, 1.0))


def test_no_boxes_gives_empty_grid(orchard_region):
    grid = rasterize_centers([], orchard_region, 100, 100)
    assert grid.cells.shape == (100, 100)
    assert grid.cells.sum() == 0


def test_region_center_lands_in_middle_cell(orchard_region):
    grid = rasterize_centers([_box(6.0, 0.0)], orchard_region, 100, 100)
    assert grid.cells.sum() == 1
    assert grid.cells[50, 50] == 1


def test_grid_is_binary(orchard_region):
    grid = rasterize_centers([_box(3.01, 0.0), _box(3.02, 0.01)], orchard_region, 100, 100)
    assert grid.cells.sum() == 1
    assert grid.cells.max() == 1


def test_cells_are_half_open(orchard_region):
    grid = rasterize_centers([_box(0.0, -4.625)], orchard_region, 10, 10)
    assert grid.cells[0, 0] == 1
    with pytest.raises(GeometryError, match="label out of detection region"):
        rasterize_centers([_box(12.0, 0.0)], orchard_region, 10, 10)


def test_grid_needs_positive_size(orchard_region):
    with pytest.raises(ValueError):
        rasterize_centers([], orchard_region, 0, 10)


def test_composed_labels_rasterize(plane_background, object_scene, params):
    scene = _compose(plane_background, object_scene, params, 6.0, 0.0)
    grid = rasterize_centers(scene.boxes, scene.region, 100, 100)
    assert isinstance(scene, ComposedScene)
    assert grid.cells[50, 50] == 1
