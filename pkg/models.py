import enum
import math
from dataclasses import dataclass, field

import numpy as np

from errors import GeometryError, PlacementError

# Tolerance used by every rotation-matrix validity check.
ROTATION_TOL = 1e-9


def _frozen_array(values, dtype=np.float64, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.flags.writeable = False
    return arr


def as_point3(p) -> np.ndarray:
    """Validate a 3D point (finite x, y, z in meters) and return it as a float64 array."""
    arr = np.asarray(p, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise GeometryError(f"expected 3 coordinates, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("point coordinates must be finite")
    return arr


# ──────────────────────────────────────────────
# ENUMS
# ──────────────────────────────────────────────

class FixtureKind(str, enum.Enum):
    plane = "plane"
    cone = "cone"
    wall = "wall"
    sphere = "sphere"


class Stage(str, enum.Enum):
    load = "load"
    level_background = "level_background"
    level_object = "level_object"
    crop = "crop"
    place = "place"
    resample = "resample"
    occlude = "occlude"
    write = "write"
    verify = "verify"
    input = "input"


# ──────────────────────────────────────────────
# POINT CLOUDS & LABELS
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class PointCloud:
    """
    Ordered set of 3D points in the sensor frame (x forward, y left, z up).
    Row i is the point with stable index i. The backing array is read-only.
    """

    points: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.points, dtype=np.float64)
        if arr.size == 0:
            arr = arr.reshape(0, 3)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise GeometryError(f"point cloud must have shape (N, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise GeometryError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", _frozen_array(arr))

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, indices) -> "PointCloud":
        """
        Points at the given indices, re-indexed by rank: the subset keeps the
        relative order of the original cloud regardless of the order of `indices`.
        Accepts an index array or a boolean mask.
        """
        idx = np.asarray(indices)
        if idx.dtype == bool:
            return PointCloud(self.points[idx])
        return PointCloud(self.points[np.unique(idx.astype(np.int64))])

    def as_float32(self) -> "PointCloud":
        """Round every coordinate to the nearest float32 (the persisted precision)."""
        return PointCloud(self.points.astype(np.float32).astype(np.float64))


@dataclass(frozen=True, eq=False)
class BoundingBox:
    """Oriented 3D box: center, full side lengths and a proper rotation (box frame -> sensor frame)."""

    center: np.ndarray
    extent: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        center = as_point3(self.center)
        extent = as_point3(self.extent)
        rot = np.asarray(self.rotation, dtype=np.float64)
        if np.any(extent <= 0):
            raise GeometryError("box extent components must be strictly positive")
        if rot.shape != (3, 3) or not np.all(np.isfinite(rot)):
            raise GeometryError("box rotation must be a finite 3x3 matrix")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > ROTATION_TOL:
            raise GeometryError("box rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ROTATION_TOL:
            raise GeometryError("box rotation must have determinant +1")
        object.__setattr__(self, "center", _frozen_array(center))
        object.__setattr__(self, "extent", _frozen_array(extent))
        object.__setattr__(self, "rotation", _frozen_array(rot))

    @classmethod
    def from_yaw(cls, center, extent, yaw: float) -> "BoundingBox":
        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(center, extent, rot)

    @property
    def yaw(self) -> float:
        """Heading of the box x-axis projected on the sensor xy-plane."""
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64)
        return self.center + (signs * (self.extent / 2.0)) @ self.rotation.T

    def footprint_xy(self) -> np.ndarray:
        """xy coordinates of all 8 corners (the box shadow on the ground plane is their hull)."""
        return self.corners()[:, :2]


def mirror_box(box: BoundingBox) -> BoundingBox:
    """Reflect a label across the sensor x-axis (y -> -y). M·R·M keeps det(R) = +1."""
    m = np.diag([1.0, -1.0, 1.0])
    return BoundingBox(box.center * np.array([1.0, -1.0, 1.0]), box.extent, m @ box.rotation @ m)


@dataclass(frozen=True)
class DetectionRegion:
    """Axis-aligned prism in the sensor frame where objects are placed and labels are valid."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        for lo, hi, axis in ((self.x_min, self.x_max, "x"), (self.y_min, self.y_max, "y"), (self.z_min, self.z_max, "z")):
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
                raise GeometryError(f"detection region needs {axis}_min < {axis}_max")

    def contains_xy(self, x, y):
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)

    @property
    def center_xy(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    def ground_region(self) -> "GroundRegion":
        return GroundRegion(self.x_min, self.x_max, max(abs(self.y_min), abs(self.y_max)))


@dataclass(frozen=True)
class GroundRegion:
    """Leveling grid region x in [x_min, x_max], y in [-y_max, y_max]."""

    x_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_max <= 0:
            raise GeometryError("ground region needs x_min < x_max and y_max > 0")

    def mask(self, points: np.ndarray) -> np.ndarray:
        x, y = points[:, 0], points[:, 1]
        return (x >= self.x_min) & (x <= self.x_max) & (y >= -self.y_max) & (y <= self.y_max)


@dataclass(frozen=True)
class SensorModel:
    """Lidar beam grid: elevation angles (degrees, ascending) x evenly spaced azimuths over [0°, 360°)."""

    name: str
    elevation_angles: tuple[float, ...]
    azimuth_count: int

    def __post_init__(self):
        elev = tuple(float(e) for e in self.elevation_angles)
        if not elev:
            raise GeometryError("sensor needs at least one elevation angle")
        if any(b < a for a, b in zip(elev, elev[1:])):
            raise GeometryError("sensor elevation angles must be sorted ascending")
        if self.azimuth_count < 1:
            raise GeometryError("sensor azimuth_count must be positive")
        object.__setattr__(self, "elevation_angles", elev)

    @classmethod
    def evenly_spaced(cls, name: str, elevation_min: float, elevation_max: float,
                      elevation_count: int, azimuth_count: int) -> "SensorModel":
        if elevation_count == 1:
            angles = (float(elevation_min),)
        else:
            angles = tuple(np.linspace(elevation_min, elevation_max, elevation_count).tolist())
        return cls(name, angles, azimuth_count)

    @property
    def azimuth_angles(self) -> np.ndarray:
        return np.arange(self.azimuth_count, dtype=np.float64) * (360.0 / self.azimuth_count)

    @property
    def beam_count(self) -> int:
        return len(self.elevation_angles) * self.azimuth_count


# ──────────────────────────────────────────────
# LEVELING
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class GroundPlane:
    """z = b0 + b1·x + b2·y"""

    b0: float
    b1: float
    b2: float

    @property
    def normal(self) -> np.ndarray:
        return np.array([-self.b1, -self.b2, 1.0])

    @property
    def unit_normal(self) -> np.ndarray:
        h = self.normal
        return h / np.linalg.norm(h)


@dataclass(frozen=True, eq=False)
class LevelTransform:
    """Leveling motion p -> R·p - t with t = (0, 0, tz)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen_array(self.rotation, shape=(3, 3)))
        object.__setattr__(self, "translation", _frozen_array(as_point3(self.translation)))

    @classmethod
    def identity(cls) -> "LevelTransform":
        return cls(np.eye(3), np.zeros(3))


# ──────────────────────────────────────────────
# PLACEMENT / OCCLUSION / BEAMS
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class PlacementTarget:
    """A location on the leveled ground plane (z = 0 exactly)."""

    rho: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.rho, dtype=np.float64).reshape(-1)
        if arr.shape[0] == 3:
            arr = arr[:2]
        if arr.shape != (2,) or not np.all(np.isfinite(arr)):
            raise PlacementError("placement target needs finite (x, y)")
        if arr[0] == 0.0 and arr[1] == 0.0:
            raise PlacementError("undefined placement direction")
        object.__setattr__(self, "rho", _frozen_array([arr[0], arr[1], 0.0]))

    @classmethod
    def at(cls, x: float, y: float) -> "PlacementTarget":
        return cls(np.array([x, y]))

    @property
    def ground_distance(self) -> float:
        return float(np.hypot(self.rho[0], self.rho[1]))


@dataclass(frozen=True, eq=False)
class SectorSubsets:
    """
    Index lists into the background cloud, ascending. Position j in a list is the
    rank-re-indexed id of that background point inside the subset.
    """

    alpha_indices: np.ndarray
    beta_indices: np.ndarray
    gamma_indices: np.ndarray


@dataclass(frozen=True, eq=False)
class BeamGrid:
    """Unit beam directions, beam a = elevation_index * n_azim + azimuth_index."""

    directions: np.ndarray
    elevations: np.ndarray
    azimuths: np.ndarray
    n_elev: int
    n_azim: int

    def __len__(self) -> int:
        return self.directions.shape[0]


# ──────────────────────────────────────────────
# COMPOSED SCENES & LABELS
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ComposedScene:
    """
    Compact scene: the final object points plus the ORIGINAL indices of the
    background points that were occluded. Expanding it gives
    (background minus dropped) followed by object_points.
    """

    background_ref: str
    background_count: int
    object_points: PointCloud
    background_dropped: np.ndarray
    boxes: tuple[BoundingBox, ...]
    region: DetectionRegion
    sensor_name: str
    seed: int = 0
    object_ids: tuple[str, ...] = ()
    targets: tuple[tuple[float, float], ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        dropped = np.asarray(self.background_dropped, dtype=np.int64).reshape(-1)
        if dropped.size and (np.any(np.diff(dropped) <= 0) or dropped[0] < 0 or dropped[-1] >= self.background_count):
            raise GeometryError("background_dropped must be unique, sorted and within background bounds")
        object.__setattr__(self, "background_dropped", _frozen_array(dropped, dtype=np.int64))
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def expanded_size(self) -> int:
        return self.background_count - len(self.background_dropped) + len(self.object_points)


@dataclass(frozen=True, eq=False)
class CenterGrid:
    """Binary raster over the detection region; row index follows x, column index follows y."""

    cells: np.ndarray
    region: DetectionRegion

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        """Half-open binning: [x_min, x_max) x [y_min, y_max)."""
        r = self.region
        if not (r.x_min <= x < r.x_max and r.y_min <= y < r.y_max):
            return None
        i = int(math.floor((x - r.x_min) / (r.x_max - r.x_min) * self.rows))
        j = int(math.floor((y - r.y_min) / (r.y_max - r.y_min) * self.cols))
        return min(i, self.rows - 1), min(j, self.cols - 1)
