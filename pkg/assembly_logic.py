# assembly_logic.py: end-to-end scene composition and center-grid labels
"""
One object is inserted into a background in this order:

  level background + level object -> crop object -> place on target
  -> unlevel into the background frame -> resample on the beam grid
  -> occlude (object vs nearer background, farther background vs object)

The result is kept compact: final object points plus the ORIGINAL indices of
the background points that were occluded. Expanding it gives the full cloud
(background minus dropped, then object points). Several objects are inserted
one after another, each treating the running composite as its background.
"""
import logging
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from beam_model import DEFAULT_BEAM_THRESHOLD, beam_directions, resample_object
from constants import DEFAULT_GRID_SIZE, DEFAULT_SECTOR_TOLERANCE
from errors import CompositionError, GeometryError, LevelingError, OcclusionError, PlacementError, SceneRecordError
from leveling_logic import estimate_level_transform, level, level_box, unlevel, unlevel_box
from models import (
    BoundingBox, CenterGrid, ComposedScene, DetectionRegion, GroundRegion, LevelTransform,
    PlacementTarget, PointCloud, SensorModel, Stage,
)
from occlusion_logic import occlude_scene
from placement_logic import boxes_intersect, crop_object, place_object

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CompositionParams:
    region: DetectionRegion
    sensor: SensorModel
    object_threshold: float = 0.04
    background_threshold: float = 0.03
    beam_threshold: float = DEFAULT_BEAM_THRESHOLD
    sector_tolerance: float = DEFAULT_SECTOR_TOLERANCE
    grid_size: int = DEFAULT_GRID_SIZE
    ground_percentile: float = 0.0
    # None -> the detection region's ground footprint
    object_ground_region: Optional[GroundRegion] = None
    background_ground_region: Optional[GroundRegion] = None
    strict: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("object_threshold", "background_threshold", "beam_threshold", "sector_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def object_leveling_region(self) -> GroundRegion:
        return self.object_ground_region or self.region.ground_region()

    @property
    def background_leveling_region(self) -> GroundRegion:
        return self.background_ground_region or self.region.ground_region()


class StageTimer:
    """Accumulates wall-clock samples per stage name."""

    def __init__(self):
        self.samples: dict[str, list[float]] = defaultdict(list)

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.samples[name].append(time.perf_counter() - start)

    def merge(self, other: "StageTimer") -> None:
        for name, values in other.samples.items():
            self.samples[name].extend(values)

    def totals(self) -> dict[str, float]:
        return {name: float(sum(values)) for name, values in self.samples.items()}

    def total(self) -> float:
        return float(sum(self.totals().values()))


class ObjectSample(NamedTuple):
    scene: PointCloud
    box: BoundingBox
    object_id: str = ""


class PreparedObject(NamedTuple):
    """Cropped object points and its box, both in the object scene's leveled frame."""
    points: PointCloud
    box: BoundingBox


def prepare_background(background: PointCloud, params: CompositionParams) -> LevelTransform:
    try:
        transform, _ = estimate_level_transform(
            background, params.background_leveling_region, params.grid_size, params.ground_percentile)
    except (LevelingError, GeometryError) as e:
        raise CompositionError(Stage.level_background.value, str(e)) from e
    return transform


def prepare_object(object_scene: PointCloud, object_box: BoundingBox, params: CompositionParams) -> PreparedObject:
    try:
        transform, _ = estimate_level_transform(
            object_scene, params.object_leveling_region, params.grid_size, params.ground_percentile)
    except (LevelingError, GeometryError) as e:
        raise CompositionError(Stage.level_object.value, str(e)) from e

    leveled_box = level_box(object_box, transform)
    cropped = crop_object(level(object_scene, transform), leveled_box)
    if len(cropped) == 0:
        raise CompositionError(Stage.crop.value, "empty cropped object")
    return PreparedObject(cropped, leveled_box)


def _round_region(region: DetectionRegion) -> DetectionRegion:
    values = np.array([region.x_min, region.x_max, region.y_min, region.y_max, region.z_min, region.z_max],
                      dtype=np.float32)
    return DetectionRegion(*(float(v) for v in values))


def _label_box(leveled_box: BoundingBox, transform: LevelTransform) -> BoundingBox:
    """Heading-only label in the background frame, at float32 precision."""
    world = unlevel_box(leveled_box, transform)
    center = world.center.astype(np.float32).astype(np.float64)
    extent = world.extent.astype(np.float32).astype(np.float64)
    yaw = float(np.float32(world.yaw))
    return BoundingBox.from_yaw(center, extent, yaw)


def _center_in_region(box: BoundingBox, region: DetectionRegion) -> bool:
    x, y = box.center[0], box.center[1]
    return region.x_min <= x < region.x_max and region.y_min <= y < region.y_max


class _Composite:
    """
    Running composite scene: the original background with a live mask plus the
    kept points of every inserted object. Set differences are index operations.
    """

    def __init__(self, background: PointCloud):
        self.background = background
        self.alive = np.ones(len(background), dtype=bool)
        self.objects: list[np.ndarray] = []

    def cloud(self) -> tuple[PointCloud, np.ndarray]:
        bg_index = np.flatnonzero(self.alive)
        parts = [self.background.points[bg_index]] + self.objects
        return PointCloud(np.vstack(parts)), bg_index

    def drop(self, composite_indices: np.ndarray, bg_index: np.ndarray) -> None:
        n_bg = bg_index.size
        from_bg = composite_indices[composite_indices < n_bg]
        self.alive[bg_index[from_bg]] = False

        offset = n_bg
        from_obj = composite_indices[composite_indices >= n_bg]
        for k, pts in enumerate(self.objects):
            local = from_obj[(from_obj >= offset) & (from_obj < offset + pts.shape[0])] - offset
            offset += pts.shape[0]
            if local.size:
                keep = np.ones(pts.shape[0], dtype=bool)
                keep[local] = False
                self.objects[k] = pts[keep]


def _insert_object(composite: _Composite, sample: ObjectSample, target: PlacementTarget,
                   bg_transform: LevelTransform, placed_boxes: list[BoundingBox],
                   params: CompositionParams, timer: StageTimer,
                   prepared: Optional[PreparedObject] = None) -> tuple[BoundingBox, BoundingBox, list[str]]:
    """Insert one object; returns (leveled placed box, label box, warnings)."""
    if prepared is None:
        with timer.stage(Stage.level_object.value):
            prepared = prepare_object(sample.scene, sample.box, params)

    with timer.stage(Stage.place.value):
        try:
            placed, placed_box = place_object(prepared.points, prepared.box, target)
        except (PlacementError, GeometryError) as e:
            raise CompositionError(Stage.place.value, str(e)) from e
        if any(boxes_intersect(placed_box, other) for other in placed_boxes):
            raise CompositionError(Stage.place.value, "placement overlaps an earlier object")
        label = _label_box(placed_box, bg_transform)
        if not _center_in_region(label, _round_region(params.region)):
            raise CompositionError(Stage.place.value, "placement outside detection region")
        world = unlevel(placed, bg_transform)

    with timer.stage(Stage.resample.value):
        resampled = resample_object(world, beam_directions(params.sensor), params.beam_threshold)
        if len(resampled) == 0:
            raise CompositionError(Stage.resample.value, "object not visible on any beam")

    with timer.stage(Stage.occlude.value):
        cloud, bg_index = composite.cloud()
        try:
            result = occlude_scene(cloud, resampled, params.object_threshold,
                                   params.background_threshold, params.sector_tolerance)
        except OcclusionError as e:
            raise CompositionError(Stage.occlude.value, str(e)) from e
        composite.drop(result.background_dropped, bg_index)
        composite.objects.append(np.array(result.object_kept.points))

    warnings = []
    if len(result.object_kept) == 0:
        warnings.append(f"object '{sample.object_id}' fully occluded")
    return placed_box, label, warnings


def compose_multi(background: PointCloud, objects: Sequence[ObjectSample], targets: Sequence[PlacementTarget],
                  params: CompositionParams, background_ref: str = "",
                  timer: Optional[StageTimer] = None, bg_transform: Optional[LevelTransform] = None,
                  prepared: Optional[Sequence[PreparedObject]] = None) -> ComposedScene:
    """
    Insert objects in increasing target distance, each against the running
    composite. Every object is placed in the leveled frame of the ORIGINAL
    background. Per-object failures are skipped with a warning unless
    params.strict is set.

    bg_transform and prepared reuse leveling results the caller already has.
    """
    timer = timer or StageTimer()
    if len(objects) != len(targets):
        raise CompositionError(Stage.input.value, f"{len(objects)} objects but {len(targets)} targets")
    if not objects and params.strict:
        raise CompositionError(Stage.input.value, "no objects to compose")
    if prepared is not None and len(prepared) != len(objects):
        raise CompositionError(Stage.input.value, f"{len(prepared)} prepared objects for {len(objects)} objects")
    if bg_transform is None:
        with timer.stage(Stage.level_background.value):
            bg_transform = prepare_background(background, params)

    composite = _Composite(background)
    placed_boxes: list[BoundingBox] = []
    labels: list[BoundingBox] = []
    object_ids: list[str] = []
    used_targets: list[tuple[float, float]] = []
    warnings: list[str] = []

    order = sorted(range(len(objects)), key=lambda i: targets[i].ground_distance)
    for i in order:
        sample, target = objects[i], targets[i]
        try:
            placed_box, label, notes = _insert_object(
                composite, sample, target, bg_transform, placed_boxes, params, timer,
                prepared[i] if prepared is not None else None)
        except CompositionError as e:
            if params.strict:
                raise
            message = f"object '{sample.object_id}' skipped: {e}"
            logger.warning(message)
            warnings.append(message)
            continue
        placed_boxes.append(placed_box)
        labels.append(label)
        object_ids.append(sample.object_id)
        used_targets.append((float(target.rho[0]), float(target.rho[1])))
        warnings.extend(notes)

    if composite.objects:
        object_points = PointCloud(np.vstack(composite.objects)).as_float32()
    else:
        object_points = PointCloud.empty()

    return ComposedScene(
        background_ref=background_ref,
        background_count=len(background),
        object_points=object_points,
        background_dropped=np.flatnonzero(~composite.alive),
        boxes=tuple(labels),
        region=_round_region(params.region),
        sensor_name=params.sensor.name,
        seed=params.seed,
        object_ids=tuple(object_ids),
        targets=tuple(used_targets),
        warnings=tuple(warnings),
    )


def compose_single(background: PointCloud, object_scene: PointCloud, object_box: BoundingBox,
                   target: PlacementTarget, params: CompositionParams, background_ref: str = "",
                   object_id: str = "", timer: Optional[StageTimer] = None) -> ComposedScene:
    """Insert one object; any failure raises CompositionError naming the stage."""
    strict = params if params.strict else replace(params, strict=True)
    return compose_multi(background, [ObjectSample(object_scene, object_box, object_id)], [target],
                         strict, background_ref, timer)


def expand_scene(scene: ComposedScene, background: PointCloud) -> PointCloud:
    """Full cloud of a compact scene: surviving background points in order, then object points."""
    if len(background) != scene.background_count:
        raise SceneRecordError(
            f"background '{scene.background_ref}' has {len(background)} points, record expects {scene.background_count}")
    keep = np.ones(len(background), dtype=bool)
    keep[scene.background_dropped] = False
    return PointCloud(np.vstack([background.points[keep], scene.object_points.points]))


def rasterize_centers(boxes: Sequence[BoundingBox], region: DetectionRegion, rows: int, cols: int) -> CenterGrid:
    """Binary grid with a 1 in every cell holding a box center (x, y); half-open cells."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be at least 1")
    grid = CenterGrid(np.zeros((rows, cols), dtype=np.uint8), region)
    for box in boxes:
        cell = grid.cell_of(float(box.center[0]), float(box.center[1]))
        if cell is None:
            raise GeometryError("label out of detection region")
        grid.cells[cell] = 1
    return grid
