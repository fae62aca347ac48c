# fixtures.py: procedural scenes ray-cast on a sensor's beam grid
# Shapes: plane, cone, wall, sphere (Strategy Pattern, one class per shape)
import logging
import math
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from beam_model import beam_directions
from models import BoundingBox, FixtureKind, PointCloud, SensorModel
from schemas import ConeParams, PlaneParams, SphereParams, WallParams

logger = logging.getLogger(__name__)


def _heading(azimuth_deg: float) -> np.ndarray:
    a = math.radians(azimuth_deg)
    return np.array([math.cos(a), math.sin(a), 0.0])


# ══════════════════════════════════════════════════════════════
# STRATEGY PATTERN: Abstract Base + Concrete Shapes
# ══════════════════════════════════════════════════════════════

class FixtureShape(ABC):
    """An analytic surface seen from a sensor at the origin."""

    @abstractmethod
    def hit_distances(self, directions: np.ndarray) -> np.ndarray:
        """Distance along each unit ray to its first hit; np.inf where the ray misses."""
        ...

    def label(self) -> Optional[BoundingBox]:
        return None

    def render(self, sensor: SensorModel) -> PointCloud:
        """One point per beam that hits the surface, in beam-index order."""
        grid = beam_directions(sensor)
        t = self.hit_distances(grid.directions)
        hit = np.isfinite(t)
        return PointCloud(grid.directions[hit] * t[hit, None])


class PlaneShape(FixtureShape):
    def __init__(self, params: PlaneParams):
        self.params = params

    def hit_distances(self, directions: np.ndarray) -> np.ndarray:
        p = self.params
        # (t·d)_z = height + slope_x·(t·d)_x + slope_y·(t·d)_y
        denom = directions[:, 2] - p.slope_x * directions[:, 0] - p.slope_y * directions[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = p.height / denom
        ok = (denom != 0.0) & (t > 0.0) & (t <= p.max_range)
        return np.where(ok, t, np.inf)


class ConeShape(FixtureShape):
    """
    Base disk of `radius` centered `distance` meters out along `azimuth`, apex
    `length` meters further away. Seen from the sensor only the disk is visible.
    """

    def __init__(self, params: ConeParams):
        self.params = params
        self.axis = _heading(params.azimuth)
        self.base = params.distance * self.axis + np.array([0.0, 0.0, params.center_z])
        self.apex = self.base + params.length * self.axis

    def hit_distances(self, directions: np.ndarray) -> np.ndarray:
        return np.minimum(self._disk(directions), self._lateral(directions))

    def _disk(self, directions: np.ndarray) -> np.ndarray:
        da = directions @ self.axis
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.base @ self.axis) / da
        ok = (da > 0.0) & (t > 0.0)
        t = np.where(ok, t, np.inf)
        hits = directions * np.where(ok, t, 0.0)[:, None]
        inside = np.sum((hits - self.base) ** 2, axis=1) <= self.params.radius ** 2
        return np.where(ok & inside, t, np.inf)

    def _lateral(self, directions: np.ndarray) -> np.ndarray:
        # |w|² = (1 + k²)(w·a)², w = p − apex, k = radius / length
        p = self.params
        k2 = 1.0 + (p.radius / p.length) ** 2
        v, a = self.apex, self.axis
        da = directions @ a
        dv = directions @ v
        va = v @ a
        qa = 1.0 - k2 * da * da
        qb = 2.0 * (-dv + k2 * da * va)
        qc = v @ v - k2 * va * va

        best = np.full(directions.shape[0], np.inf)
        disc = qb * qb - 4.0 * qa * qc
        solvable = (disc >= 0.0) & (np.abs(qa) > 1e-15)
        root = np.sqrt(np.where(solvable, disc, 0.0))
        safe_qa = np.where(solvable, qa, 1.0)
        for sign in (-1.0, 1.0):
            t = (-qb + sign * root) / (2.0 * safe_qa)
            # distance from the apex back toward the base must lie in [0, length]
            back = -((directions * t[:, None] - v) @ a)
            ok = solvable & (t > 0.0) & (back >= 0.0) & (back <= p.length)
            best = np.where(ok & (t < best), t, best)
        return best

    def label(self) -> BoundingBox:
        p = self.params
        center = self.base + 0.5 * p.length * self.axis
        return BoundingBox.from_yaw(center, (p.length, 2 * p.radius, 2 * p.radius), math.radians(p.azimuth))


class WallShape(FixtureShape):
    def __init__(self, params: WallParams):
        self.params = params
        self.normal = _heading(params.azimuth)
        self.lateral = np.array([-self.normal[1], self.normal[0], 0.0])

    def hit_distances(self, directions: np.ndarray) -> np.ndarray:
        p = self.params
        dn = directions @ self.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = p.distance / dn
        ok = dn > 0.0
        hits = directions * np.where(ok, t, 0.0)[:, None]
        across = hits @ self.lateral
        ok &= (np.abs(across) <= p.width / 2.0) & (hits[:, 2] >= p.z_min) & (hits[:, 2] <= p.z_max)
        return np.where(ok, t, np.inf)


class SphereShape(FixtureShape):
    def __init__(self, params: SphereParams):
        self.params = params
        self.center = params.distance * _heading(params.azimuth) + np.array([0.0, 0.0, params.center_z])

    def hit_distances(self, directions: np.ndarray) -> np.ndarray:
        # |t·d − c|² = r²  ->  t = d·c − sqrt((d·c)² − |c|² + r²), near root
        dc = directions @ self.center
        disc = dc * dc - (self.center @ self.center - self.params.radius ** 2)
        t = dc - np.sqrt(np.maximum(disc, 0.0))
        ok = (disc >= 0.0) & (t > 0.0)
        return np.where(ok, t, np.inf)

    def label(self) -> BoundingBox:
        r = self.params.radius
        return BoundingBox.from_yaw(self.center, (2 * r, 2 * r, 2 * r), math.radians(self.params.azimuth))


_SHAPES = {
    FixtureKind.plane: (PlaneShape, PlaneParams),
    FixtureKind.cone: (ConeShape, ConeParams),
    FixtureKind.wall: (WallShape, WallParams),
    FixtureKind.sphere: (SphereShape, SphereParams),
}


def get_shape(kind: FixtureKind | str, params: dict | None = None) -> FixtureShape:
    """Factory: validate params for the kind and build its shape."""
    try:
        kind = FixtureKind(kind)
    except ValueError:
        raise ValueError(f"Unknown fixture kind: {kind}") from None
    shape_cls, params_cls = _SHAPES[kind]
    return shape_cls(params_cls.model_validate(params or {}))


def make_fixture(kind: FixtureKind | str, params: dict | None,
                 sensor: SensorModel) -> tuple[PointCloud, Optional[BoundingBox]]:
    """
    Ray-cast an analytic shape on the sensor's beams. Returns the cloud and,
    for cone and sphere, the shape's label box.
    """
    shape = get_shape(kind, params)
    cloud = shape.render(sensor)
    if len(cloud) == 0:
        logger.warning(f"Fixture '{FixtureKind(kind).value}' is outside all beams of sensor '{sensor.name}'; empty cloud")
    return cloud, shape.label()


def make_scene_fixture(parts: list[tuple[FixtureKind | str, dict | None]], sensor: SensorModel) -> PointCloud:
    """Ray-cast several shapes together; every beam keeps only its nearest hit."""
    if not parts:
        raise ValueError("scene fixture needs at least one shape")
    grid = beam_directions(sensor)
    t = np.full(len(grid), np.inf)
    for kind, params in parts:
        t = np.minimum(t, get_shape(kind, params).hit_distances(grid.directions))
    hit = np.isfinite(t)
    if not np.any(hit):
        logger.warning(f"Scene fixture is outside all beams of sensor '{sensor.name}'; empty cloud")
    return PointCloud(grid.directions[hit] * t[hit, None])
