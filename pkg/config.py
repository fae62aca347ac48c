# config.py: pipeline configuration: JSON file + preset + environment + CLI overrides
import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from assembly_logic import CompositionParams
from beam_model import sensor_from_preset
from constants import OUTPUT_DIR_ENV, PRESETS
from errors import ConfigError
from models import DetectionRegion, GroundRegion, SensorModel
from schemas import GroundRegionConfig, PipelineConfig, SensorConfig

load_dotenv()

logger = logging.getLogger(__name__)

# Keys whose relative paths resolve against the config file's directory
_PATH_KEYS = ("background_manifest", "object_manifest")


def _merge(base: dict, top: dict) -> dict:
    """Recursive dict merge; values in `top` win."""
    merged = copy.deepcopy(base)
    for key, value in top.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _first_error(e: ValidationError) -> ConfigError:
    err = e.errors()[0]
    key = ".".join(str(part) for part in err["loc"]) or "config"
    if err["type"] == "value_error":
        message = str(err["ctx"]["error"])
    else:
        message = f"{key}: {err['msg']}"
    return ConfigError(key, message)


def load_config(path=None, preset: Optional[str] = None,
                overrides: Optional[dict[str, Any]] = None) -> PipelineConfig:
    """
    Build a validated PipelineConfig. Precedence, lowest first:
    preset < config file < SCENE_OUTPUT_DIR < overrides (None values ignored).
    """
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError("config", f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "config file must hold a JSON object")
        for key in _PATH_KEYS:
            value = data.get(key)
            if isinstance(value, str) and not Path(value).is_absolute():
                data[key] = str(path.parent / value)

    preset_name = preset or data.get("preset")
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError("preset", f"preset must be one of {', '.join(sorted(PRESETS))}")
        data = _merge(PRESETS[preset_name], data)
        data["preset"] = preset_name

    env_output = os.getenv(OUTPUT_DIR_ENV)
    if env_output:
        data["output_dir"] = env_output

    if overrides:
        data = _merge(data, {k: v for k, v in overrides.items() if v is not None})

    try:
        config = PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise _first_error(e) from None
    logger.debug(f"Loaded config (preset={config.preset}, scenes={config.scene_count}, workers={config.workers})")
    return config


def resolve_sensor(sensor: str | SensorConfig) -> SensorModel:
    if isinstance(sensor, str):
        return sensor_from_preset(sensor)
    return SensorModel.evenly_spaced(sensor.name, sensor.elevation_min, sensor.elevation_max,
                                     sensor.elevation_count, sensor.azimuth_count)


def _ground_region(region: Optional[GroundRegionConfig]) -> Optional[GroundRegion]:
    return None if region is None else GroundRegion(region.x_min, region.x_max, region.y_max)


def detection_region(config: PipelineConfig) -> DetectionRegion:
    r = config.region
    return DetectionRegion(r.x_min, r.x_max, r.y_min, r.y_max, r.z_min, r.z_max)


def composition_params(config: PipelineConfig) -> CompositionParams:
    return CompositionParams(
        region=detection_region(config),
        sensor=resolve_sensor(config.sensor),
        object_threshold=config.object_threshold,
        background_threshold=config.background_threshold,
        beam_threshold=config.beam_threshold,
        sector_tolerance=config.sector_tolerance,
        grid_size=config.leveling.grid_size,
        ground_percentile=config.leveling.ground_percentile,
        object_ground_region=_ground_region(config.leveling.object_region),
        background_ground_region=_ground_region(config.leveling.background_region),
        strict=config.strict,
        seed=config.seed,
    )
