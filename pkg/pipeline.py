# pipeline.py: config-driven batch generation of composed scenes
"""
Scene k draws everything it needs (background, object count, objects,
placements) from its own generator seeded by (master seed, k), so the output
does not depend on how scenes are spread across workers.
"""
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from assembly_logic import (
    CompositionParams, PreparedObject, StageTimer, compose_multi, prepare_background, prepare_object,
)
from config import composition_params
from constants import MANIFEST_FILE, MIRROR_SUFFIX, RECORD_EXTENSION, RECORDS_DIR, REPORT_FILE
from errors import CompositionError, PcdParseError, PlacementError, SceneRecordError, UnknownBackgroundError
from leveling_logic import unlevel_box
from models import BoundingBox, DetectionRegion, LevelTransform, PlacementTarget, Stage
from pcd_io import atomic_write_bytes
from placement_logic import boxes_intersect, footprint_inside, place_box
from scene_store import BackgroundStore, ObjectStore, read_scene, reconstruct, validate_scene, write_scene
from schemas import PipelineConfig

logger = logging.getLogger(__name__)

# Slack for a box whose footprint exactly matches the region
_FIT_TOL = 1e-9


# ──────────────────────────────────────────────
# RESULTS
# ──────────────────────────────────────────────

@dataclass
class SceneFailure:
    index: int
    stage: str
    reason: str


@dataclass
class SceneOutcome:
    index: int
    record: Optional[str] = None
    background_id: Optional[str] = None
    failure: Optional[SceneFailure] = None
    stage_times: dict[str, list[float]] = field(default_factory=dict)


@dataclass
class RunReport:
    requested: int
    written: int
    failures: list[SceneFailure]
    wall_time: float
    workers: int
    stage_times: dict[str, list[float]]
    records: list[str] = field(default_factory=list)
    verified: int = 0

    @property
    def throughput(self) -> float:
        """Written scenes per second of wall time."""
        return self.written / self.wall_time if self.wall_time > 0 else 0.0

    def stage_table(self) -> pd.DataFrame:
        rows = [(stage, t) for stage, values in self.stage_times.items() for t in values]
        frame = pd.DataFrame(rows, columns=["stage", "seconds"])
        if frame.empty:
            return pd.DataFrame(columns=["count", "mean", "p50", "p95", "max", "total"])
        grouped = frame.groupby("stage")["seconds"]
        return pd.DataFrame({
            "count": grouped.count(),
            "mean": grouped.mean(),
            "p50": grouped.quantile(0.5),
            "p95": grouped.quantile(0.95),
            "max": grouped.max(),
            "total": grouped.sum(),
        })

    def stage_histogram(self, bins: int = 10) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Per-stage (counts, bin edges) of the recorded timings."""
        return {stage: np.histogram(values, bins=bins) for stage, values in self.stage_times.items() if values}

    def failures_table(self) -> pd.DataFrame:
        return pd.DataFrame([dataclasses.asdict(f) for f in self.failures], columns=["index", "stage", "reason"])

    def render(self) -> str:
        """Deterministic part of the report: counts and failures, no timings."""
        lines = [
            f"scenes requested: {self.requested}",
            f"scenes written: {self.written}",
            f"scenes failed: {len(self.failures)}",
            f"records verified: {self.verified}",
        ]
        if self.failures:
            lines += ["", self.failures_table().to_string(index=False)]
        return "\n".join(lines) + "\n"


# ──────────────────────────────────────────────
# SAMPLING
# ──────────────────────────────────────────────

def scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def sample_placement(rng: np.random.Generator, region: DetectionRegion, box: BoundingBox) -> PlacementTarget:
    """
    Uniform ground target in the region shrunk by the box's half-footprint
    (axis-aligned extent of its corners about the center).
    """
    offsets = np.abs(box.footprint_xy() - box.center[:2])
    half_x, half_y = float(offsets[:, 0].max()), float(offsets[:, 1].max())

    bounds = []
    for lo, hi, half, axis in ((region.x_min, region.x_max, half_x, "x"), (region.y_min, region.y_max, half_y, "y")):
        a, b = lo + half, hi - half
        if b < a:
            if a - b > _FIT_TOL:
                raise PlacementError(f"box larger than detection region along {axis}")
            a = b = (lo + hi) / 2.0
        bounds.append((a, b))
    x = float(rng.uniform(*bounds[0]))
    y = float(rng.uniform(*bounds[1]))
    return PlacementTarget.at(x, y)


def _draw_id(rng: np.random.Generator, ids: list[str], mirror: bool) -> str:
    store_id = ids[int(rng.integers(len(ids)))]
    if mirror and rng.random() < 0.5:
        store_id += MIRROR_SUFFIX
    return store_id


def _choose_target(rng: np.random.Generator, prepared: PreparedObject, bg_transform: LevelTransform,
                   placed: list[BoundingBox], params: CompositionParams,
                   max_attempts: int) -> tuple[PlacementTarget, BoundingBox]:
    region = params.region
    for _ in range(max_attempts):
        try:
            target = sample_placement(rng, region, prepared.box)
        except PlacementError as e:
            raise CompositionError(Stage.place.value, str(e)) from e
        try:
            box = place_box(prepared.box, target)
        except PlacementError:
            continue
        if any(boxes_intersect(box, other) for other in placed):
            continue
        world = unlevel_box(box, bg_transform)
        if not footprint_inside(world, region):
            continue
        x, y = world.center[:2]
        if region.x_min <= x < region.x_max and region.y_min <= y < region.y_max:
            return target, box
    raise CompositionError(Stage.place.value, f"no admissible placement after {max_attempts} attempts")


# ──────────────────────────────────────────────
# WORKERS
# ──────────────────────────────────────────────

@lru_cache(maxsize=4)
def _open_stores(background_manifest: str, object_manifest: str) -> tuple[BackgroundStore, ObjectStore]:
    """One pair of stores per worker process; the stores are read-only during a run."""
    return BackgroundStore(background_manifest), ObjectStore(object_manifest)


def record_name(index: int) -> str:
    return f"{RECORDS_DIR}/{index:08d}{RECORD_EXTENSION}"


def _compose_scene(index: int, config: PipelineConfig, params: CompositionParams, output_dir: str) -> SceneOutcome:
    timer = StageTimer()
    outcome = SceneOutcome(index)
    rng = scene_rng(config.seed, index)
    backgrounds, objects = _open_stores(config.background_manifest, config.object_manifest)

    bg_id = _draw_id(rng, backgrounds.ids, config.mirror)
    n_objects = int(rng.integers(config.objects_min, config.objects_max + 1))
    object_ids = [_draw_id(rng, objects.ids, config.mirror) for _ in range(n_objects)]
    outcome.background_id = bg_id

    try:
        with timer.stage(Stage.load.value):
            background = backgrounds.get(bg_id)
            samples = [objects.get(object_id) for object_id in object_ids]

        with timer.stage(Stage.level_background.value):
            bg_transform = prepare_background(background, params)

        kept, prepared, targets, placed, warnings = [], [], [], [], []
        for sample in samples:
            try:
                with timer.stage(Stage.level_object.value):
                    prep = prepare_object(sample.scene, sample.box, params)
                with timer.stage(Stage.place.value):
                    target, box = _choose_target(rng, prep, bg_transform, placed, params,
                                                 config.max_placement_attempts)
            except CompositionError as e:
                if config.strict:
                    raise
                warnings.append(f"object '{sample.object_id}' skipped: {e}")
                continue
            kept.append(sample)
            prepared.append(prep)
            targets.append(target)
            placed.append(box)

        scene = compose_multi(background, kept, targets, params, bg_id, timer, bg_transform, prepared)
        if warnings:
            scene = dataclasses.replace(scene, warnings=tuple(warnings) + scene.warnings)

        with timer.stage(Stage.write.value):
            name = record_name(index)
            write_scene(scene, Path(output_dir) / name)
        outcome.record = name
    except CompositionError as e:
        outcome.failure = SceneFailure(index, e.stage, e.reason)
    except (UnknownBackgroundError, PcdParseError, OSError) as e:
        outcome.failure = SceneFailure(index, Stage.load.value, str(e).strip("'\""))
    except SceneRecordError as e:
        outcome.failure = SceneFailure(index, Stage.write.value, str(e))

    if outcome.failure is not None:
        logger.warning(f"Scene {index} failed at {outcome.failure.stage}: {outcome.failure.reason}")
    outcome.stage_times = dict(timer.samples)
    return outcome


def _verify_record(index: int, path: str, config: PipelineConfig) -> Optional[SceneFailure]:
    """Re-read a record and rebuild its scene; a failure names what broke."""
    backgrounds, _ = _open_stores(config.background_manifest, config.object_manifest)
    try:
        scene = read_scene(path)
        background = backgrounds.get(scene.background_ref)
        problems = validate_scene(scene, len(background))
        cloud, _ = reconstruct(scene, backgrounds, config.label_rows, config.label_cols)
        if len(cloud) != scene.expanded_size():
            problems.append(f"reconstructed {len(cloud)} points, expected {scene.expanded_size()}")
    except (ValueError, KeyError, OSError) as e:
        problems = [str(e)]
    if problems:
        return SceneFailure(index, Stage.verify.value, "; ".join(problems))
    return None


# ──────────────────────────────────────────────
# COORDINATOR
# ──────────────────────────────────────────────

def _prepare_output(output_dir: Path) -> None:
    records = output_dir / RECORDS_DIR
    records.mkdir(parents=True, exist_ok=True)
    stale = sorted(records.glob(f"*{RECORD_EXTENSION}"))
    if stale:
        logger.warning(f"Removing {len(stale)} records left over from an earlier run in {records}")
        for path in stale:
            path.unlink()


def generate_dataset(config: PipelineConfig) -> RunReport:
    """
    Compose config.scene_count scenes across config.workers processes and write
    the output tree (records/, manifest.txt, report.txt). Failed scenes are
    recorded and skipped; with config.strict the first failure aborts the run.
    """
    start = time.perf_counter()
    params = composition_params(config)
    output_dir = Path(config.output_dir)

    _open_stores.cache_clear()
    backgrounds, objects = _open_stores(config.background_manifest, config.object_manifest)
    if not backgrounds.ids or not objects.ids:
        raise ValueError("background and object manifests must list at least one entry")
    _prepare_output(output_dir)
    logger.info(f"Generating {config.scene_count} scenes with {config.workers} worker(s) into {output_dir}")

    parallel = Parallel(n_jobs=config.workers, backend="loky", return_as="generator")
    outcomes: list[SceneOutcome] = []
    for outcome in parallel(delayed(_compose_scene)(k, config, params, str(output_dir))
                            for k in range(config.scene_count)):
        if config.strict and outcome.failure is not None:
            f = outcome.failure
            raise CompositionError(f.stage, f"scene {f.index}: {f.reason}")
        outcomes.append(outcome)

    failures = [o.failure for o in outcomes if o.failure is not None]
    written = [o for o in outcomes if o.record is not None]

    verified = 0
    if config.verify and written:
        checks = Parallel(n_jobs=config.workers, backend="loky")(
            delayed(_verify_record)(o.index, str(output_dir / o.record), config) for o in written)
        still_written = []
        for outcome, failure in zip(written, checks):
            if failure is None:
                still_written.append(outcome)
                continue
            if config.strict:
                raise CompositionError(failure.stage, f"scene {failure.index}: {failure.reason}")
            logger.warning(f"Scene {failure.index} failed verification: {failure.reason}")
            (output_dir / outcome.record).unlink(missing_ok=True)
            failures.append(failure)
        written = still_written
        verified = len(written)
        failures.sort(key=lambda f: f.index)

    stage_times: dict[str, list[float]] = {}
    for outcome in outcomes:
        for stage, values in outcome.stage_times.items():
            stage_times.setdefault(stage, []).extend(values)

    report = RunReport(
        requested=config.scene_count,
        written=len(written),
        failures=failures,
        wall_time=time.perf_counter() - start,
        workers=config.workers,
        stage_times=stage_times,
        records=[o.record for o in written],
        verified=verified,
    )

    manifest = "".join(f"{o.record}\t{o.background_id}\n" for o in written)
    atomic_write_bytes(output_dir / MANIFEST_FILE, manifest.encode("utf-8"))
    atomic_write_bytes(output_dir / REPORT_FILE, report.render().encode("utf-8"))

    logger.info(f"Wrote {report.written}/{report.requested} scenes in {report.wall_time:.2f}s "
                f"({report.throughput:.1f} scenes/s), {len(failures)} failed")
    if not report.stage_table().empty:
        logger.info("Stage timings (seconds):\n" + report.stage_table().to_string(float_format=lambda v: f"{v:.4f}"))
    for stage, (counts, edges) in report.stage_histogram().items():
        logger.debug(f"Stage timing histogram {stage}: counts={counts.tolist()} "
                     f"edges=[{edges[0]:.4f} .. {edges[-1]:.4f}]s")
    return report
