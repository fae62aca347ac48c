from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from constants import (
    DEFAULT_GRID_SIZE, DEFAULT_SECTOR_TOLERANCE, MAX_OBJECTS_PER_SCENE, MAX_PLACEMENT_ATTEMPTS,
    PRESETS, SENSOR_PRESETS,
)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ──────────────────────────────────────────────
# PIPELINE CONFIG
# ──────────────────────────────────────────────

class RegionConfig(StrictModel):
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    @model_validator(mode="after")
    def check_bounds(self):
        for axis in ("x", "y", "z"):
            if getattr(self, f"{axis}_min") >= getattr(self, f"{axis}_max"):
                raise ValueError(f"region.{axis}_min must be below region.{axis}_max")
        return self


class SensorConfig(StrictModel):
    """Custom beam grid; elevations are evenly spaced over [elevation_min, elevation_max] in degrees."""
    name: str = "custom"
    elevation_min: float
    elevation_max: float
    elevation_count: int = Field(ge=1)
    azimuth_count: int = Field(ge=1)

    @model_validator(mode="after")
    def check_span(self):
        if self.elevation_max < self.elevation_min:
            raise ValueError("sensor.elevation_max must not be below sensor.elevation_min")
        if not (-90.0 <= self.elevation_min and self.elevation_max <= 90.0):
            raise ValueError("sensor elevations must lie in [-90, 90] degrees")
        return self


class GroundRegionConfig(StrictModel):
    x_min: float
    x_max: float
    y_max: float = Field(gt=0)

    @model_validator(mode="after")
    def check_bounds(self):
        if self.x_min >= self.x_max:
            raise ValueError("ground region x_min must be below x_max")
        return self


class LevelingConfig(StrictModel):
    grid_size: int = Field(default=DEFAULT_GRID_SIZE, ge=1)
    ground_percentile: float = Field(default=0.0, ge=0.0, le=100.0)
    # None -> derived from the detection region
    object_region: Optional[GroundRegionConfig] = None
    background_region: Optional[GroundRegionConfig] = None


class PipelineConfig(StrictModel):
    model_config = ConfigDict(extra="forbid", validate_default=True)

    preset: Optional[str] = None

    background_manifest: str
    object_manifest: str
    output_dir: str = "output"
    scene_count: int = 1
    objects_min: int = 1
    objects_max: int = 1

    region: RegionConfig
    sensor: Union[str, SensorConfig] = "os1-128"

    # meters
    object_threshold: float = 0.04
    background_threshold: float = 0.03
    beam_threshold: float = 0.04
    # radians
    sector_tolerance: float = DEFAULT_SECTOR_TOLERANCE

    leveling: LevelingConfig = Field(default_factory=LevelingConfig)
    mirror: bool = False
    seed: int = 0
    workers: int = 1
    strict: bool = False
    verify: bool = True
    label_rows: int = 100
    label_cols: int = 100
    max_placement_attempts: int = MAX_PLACEMENT_ATTEMPTS

    @field_validator("preset")
    @classmethod
    def known_preset(cls, v):
        if v is not None and v not in PRESETS:
            raise ValueError(f"preset must be one of {', '.join(sorted(PRESETS))}")
        return v

    @field_validator("sensor")
    @classmethod
    def known_sensor(cls, v):
        if isinstance(v, str) and v not in SENSOR_PRESETS:
            raise ValueError(f"sensor must be one of {', '.join(sorted(SENSOR_PRESETS))}")
        return v

    @field_validator("object_threshold", "background_threshold", "beam_threshold", "sector_tolerance")
    @classmethod
    def positive_threshold(cls, v, info):
        if not v > 0:
            raise ValueError(f"{info.field_name} must be positive")
        return v

    @field_validator("scene_count", "workers", "label_rows", "label_cols", "max_placement_attempts")
    @classmethod
    def at_least_one(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} must be at least 1")
        return v

    @field_validator("seed")
    @classmethod
    def seed_fits_record(cls, v):
        if not 0 <= v < 2 ** 64:
            raise ValueError("seed must be in [0, 2**64)")
        return v

    @field_validator("objects_min")
    @classmethod
    def objects_min_non_negative(cls, v):
        if v < 0:
            raise ValueError("objects_min must be non-negative")
        return v

    @field_validator("objects_max")
    @classmethod
    def objects_max_in_range(cls, v, info):
        if "objects_min" in info.data and v < info.data["objects_min"]:
            raise ValueError("objects_max must not be below objects_min")
        if v > MAX_OBJECTS_PER_SCENE:
            raise ValueError(f"objects_max must be at most {MAX_OBJECTS_PER_SCENE}")
        return v


# ──────────────────────────────────────────────
# FIXTURE PARAMETERS
# Distances in meters, azimuths in degrees.
# ──────────────────────────────────────────────

class PlaneParams(StrictModel):
    """Ground plane z = height + slope_x·x + slope_y·y, hit up to max_range."""
    height: float = -1.5
    slope_x: float = 0.0
    slope_y: float = 0.0
    max_range: float = Field(default=40.0, gt=0)


class ConeParams(StrictModel):
    """Horizontal cone whose base disk faces the sensor; the apex points away."""
    distance: float = Field(default=5.0, gt=0)
    azimuth: float = 0.0
    center_z: float = -0.9
    radius: float = Field(default=0.5, gt=0)
    length: float = Field(default=1.0, gt=0)


class WallParams(StrictModel):
    """Vertical rectangle perpendicular to the line of sight."""
    distance: float = Field(default=4.0, gt=0)
    azimuth: float = 0.0
    width: float = Field(default=2.0, gt=0)
    z_min: float = -1.5
    z_max: float = 1.0

    @model_validator(mode="after")
    def check_height(self):
        if self.z_min >= self.z_max:
            raise ValueError("wall z_min must be below z_max")
        return self


class SphereParams(StrictModel):
    distance: float = Field(default=5.0, gt=0)
    azimuth: float = 0.0
    center_z: float = 0.0
    radius: float = Field(default=0.5, gt=0)

    @model_validator(mode="after")
    def sensor_outside(self):
        if self.radius >= (self.distance ** 2 + self.center_z ** 2) ** 0.5:
            raise ValueError("sphere must not contain the sensor")
        return self
