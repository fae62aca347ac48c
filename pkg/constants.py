# --- SENSOR PRESETS ---
SENSOR_PRESETS = {
    # 128 evenly spaced elevations over ±22.5°, 2,048 azimuths
    "os1-128": {"elevation_min": -22.5, "elevation_max": 22.5, "elevation_count": 128, "azimuth_count": 2048},
    # 64 evenly spaced elevations from -24.8° to 2°, 2,083 azimuths
    "hdl-64": {"elevation_min": -24.8, "elevation_max": 2.0, "elevation_count": 64, "azimuth_count": 2083},
}

# --- TASK PRESETS ---
# Thresholds in meters, sector tolerance in radians.
PRESETS = {
    "orchard": {
        "region": {"x_min": 0.0, "x_max": 12.0, "y_min": -4.625, "y_max": 4.625, "z_min": -1.0, "z_max": 5.0},
        "sensor": "os1-128",
        "object_threshold": 0.04,
        "background_threshold": 0.03,
        "beam_threshold": 0.04,
        "objects_min": 1,
        "objects_max": 1,
        "mirror": True,
        "label_rows": 100,
        "label_cols": 100,
    },
    "urban": {
        "region": {"x_min": 0.0, "x_max": 19.0, "y_min": -9.0, "y_max": 9.0, "z_min": -2.5, "z_max": 4.0},
        "sensor": "hdl-64",
        "object_threshold": 0.08,
        "background_threshold": 0.03,
        "beam_threshold": 0.04,
        "objects_min": 1,
        "objects_max": 10,
        "mirror": True,
        "label_rows": 200,
        "label_cols": 200,
    },
}

# --- LIBRARY DEFAULTS ---
DEFAULT_SECTOR_TOLERANCE = 0.02
DEFAULT_GRID_SIZE = 20
MAX_OBJECTS_PER_SCENE = 10
MAX_PLACEMENT_ATTEMPTS = 100

# Store ids ending with this suffix resolve to the x-axis mirror of the stored cloud.
MIRROR_SUFFIX = "#mirror"

# --- OUTPUT TREE ---
RECORDS_DIR = "records"
RECORD_EXTENSION = ".p2ps"
MANIFEST_FILE = "manifest.txt"
REPORT_FILE = "report.txt"
OUTPUT_DIR_ENV = "SCENE_OUTPUT_DIR"
