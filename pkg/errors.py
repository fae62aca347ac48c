# errors.py: typed errors raised across the composition pipeline
# Everything derives from ValueError so existing `except ValueError` callers keep working.


class GeometryError(ValueError):
    """Degenerate geometric input (e.g. a point on the sensor z-axis)."""


class LevelingError(ValueError):
    """Ground grid or ground-plane fit could not be computed."""


class PlacementError(ValueError):
    """A placement target or box cannot be used."""


class OcclusionError(ValueError):
    """Sector or ray tests were given unusable input."""


class CompositionError(ValueError):
    """
    A scene could not be composed. `stage` names the pipeline step that failed
    (level_background, level_object, crop, place, resample, occlude, input).
    """

    def __init__(self, stage: str, reason: str):
        super().__init__(f"[{stage}] {reason}")
        self.stage = stage
        self.reason = reason


class PcdParseError(ValueError):
    """Malformed PCD file. `offset` is the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class SceneRecordError(ValueError):
    """Scene record file violates the layout or its invariants."""


class UnknownBackgroundError(KeyError):
    """Requested id is not present in a store manifest."""


class ConfigError(ValueError):
    """Invalid pipeline configuration. `key` is the offending config key."""

    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key
