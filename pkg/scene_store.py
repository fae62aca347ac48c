# scene_store.py: compact scene records, manifest-backed stores, on-the-fly reconstruction
"""
Scene record layout (little-endian throughout):

  offset  size  field
  0       4     magic b"P2PS"
  4       1     format version (1)
  5       3     reserved, zero
  8       4     background point count            uint32
  12      4     object point count N              uint32
  16      4     dropped index count D             uint32
  20      4     box count B                       uint32
  24      4     provenance length P (bytes)       uint32
  28      24    detection region x/y/z min,max    6 x float32
  52      8     seed                              uint64
  60      2     background id length I (bytes)    uint16
  62      2     sensor name length S (bytes)      uint16
  64      I     background id                     UTF-8
  ..      S     sensor name                       UTF-8
  ..      12N   object points x y z               float32
  ..      4D    dropped background indices        uint32, strictly increasing
  ..      28B   boxes cx cy cz dx dy dz yaw       float32
  ..      P     provenance                        UTF-8 JSON
"""
import csv
import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from assembly_logic import ObjectSample, expand_scene, rasterize_centers
from constants import MIRROR_SUFFIX
from errors import GeometryError, SceneRecordError, UnknownBackgroundError
from geometry import mirror_x
from models import BoundingBox, CenterGrid, ComposedScene, DetectionRegion, PointCloud, mirror_box
from pcd_io import atomic_write_bytes, read_pcd

logger = logging.getLogger(__name__)

MAGIC = b"P2PS"
FORMAT_VERSION = 1

_HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "u1"),
    ("reserved", "u1", (3,)),
    ("background_count", "<u4"),
    ("object_point_count", "<u4"),
    ("dropped_count", "<u4"),
    ("box_count", "<u4"),
    ("provenance_len", "<u4"),
    ("region", "<f4", (6,)),
    ("seed", "<u8"),
    ("background_id_len", "<u2"),
    ("sensor_name_len", "<u2"),
])
HEADER_SIZE = _HEADER.itemsize
POINT_SIZE = 12
INDEX_SIZE = 4
BOX_SIZE = 28


def record_size(n_object_points: int, n_dropped: int, n_boxes: int = 0,
                id_len: int = 0, sensor_len: int = 0, provenance_len: int = 0) -> int:
    """Exact byte size of a record with the given block lengths."""
    return (HEADER_SIZE + id_len + sensor_len + POINT_SIZE * n_object_points
            + INDEX_SIZE * n_dropped + BOX_SIZE * n_boxes + provenance_len)


# ──────────────────────────────────────────────
# ENCODE / DECODE
# ──────────────────────────────────────────────

def _provenance(scene: ComposedScene) -> bytes:
    payload = {
        "object_ids": list(scene.object_ids),
        "targets": [list(t) for t in scene.targets],
        "warnings": list(scene.warnings),
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def encode_scene(scene: ComposedScene) -> bytes:
    background_id = scene.background_ref.encode("utf-8")
    sensor_name = scene.sensor_name.encode("utf-8")
    provenance = _provenance(scene)
    if len(background_id) > 0xFFFF or len(sensor_name) > 0xFFFF:
        raise SceneRecordError("background id or sensor name too long for record header")
    if scene.background_count > 0xFFFFFFFF:
        raise SceneRecordError("background too large for uint32 indices")

    r = scene.region
    header = np.zeros(1, dtype=_HEADER)
    header["magic"] = MAGIC
    header["version"] = FORMAT_VERSION
    header["background_count"] = scene.background_count
    header["object_point_count"] = len(scene.object_points)
    header["dropped_count"] = len(scene.background_dropped)
    header["box_count"] = len(scene.boxes)
    header["provenance_len"] = len(provenance)
    header["region"] = [r.x_min, r.x_max, r.y_min, r.y_max, r.z_min, r.z_max]
    header["seed"] = scene.seed
    header["background_id_len"] = len(background_id)
    header["sensor_name_len"] = len(sensor_name)

    boxes = np.array([[*b.center, *b.extent, b.yaw] for b in scene.boxes], dtype="<f4").reshape(-1, 7)
    return b"".join([
        header.tobytes(),
        background_id,
        sensor_name,
        np.ascontiguousarray(scene.object_points.points, dtype="<f4").tobytes(),
        np.ascontiguousarray(scene.background_dropped, dtype="<u4").tobytes(),
        boxes.tobytes(),
        provenance,
    ])


def decode_scene(raw: bytes) -> ComposedScene:
    if len(raw) < HEADER_SIZE:
        raise SceneRecordError(f"record is {len(raw)} bytes, shorter than the {HEADER_SIZE}-byte header")
    header = np.frombuffer(raw, dtype=_HEADER, count=1)[0]
    if bytes(header["magic"]) != MAGIC:
        raise SceneRecordError("not a scene record (bad magic)")
    if int(header["version"]) != FORMAT_VERSION:
        raise SceneRecordError(f"unsupported record version {int(header['version'])}, expected {FORMAT_VERSION}")

    n_points = int(header["object_point_count"])
    n_dropped = int(header["dropped_count"])
    n_boxes = int(header["box_count"])
    id_len = int(header["background_id_len"])
    sensor_len = int(header["sensor_name_len"])
    prov_len = int(header["provenance_len"])
    expected = record_size(n_points, n_dropped, n_boxes, id_len, sensor_len, prov_len)
    if len(raw) != expected:
        raise SceneRecordError(f"block length mismatch: header declares {expected} bytes, record has {len(raw)}")

    offset = HEADER_SIZE

    def take(size: int) -> bytes:
        nonlocal offset
        chunk = raw[offset:offset + size]
        offset += size
        return chunk

    try:
        background_ref = take(id_len).decode("utf-8")
        sensor_name = take(sensor_len).decode("utf-8")
    except UnicodeDecodeError as e:
        raise SceneRecordError(f"invalid UTF-8 in record header strings: {e}") from None
    points = np.frombuffer(take(POINT_SIZE * n_points), dtype="<f4").reshape(n_points, 3)
    dropped = np.frombuffer(take(INDEX_SIZE * n_dropped), dtype="<u4").astype(np.int64)
    boxes = np.frombuffer(take(BOX_SIZE * n_boxes), dtype="<f4").reshape(n_boxes, 7).astype(np.float64)
    try:
        provenance = json.loads(take(prov_len).decode("utf-8")) if prov_len else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SceneRecordError(f"unreadable provenance block: {e}") from None

    background_count = int(header["background_count"])
    if dropped.size and (np.any(np.diff(dropped) <= 0) or dropped[-1] >= background_count):
        raise SceneRecordError("dropped indices must be strictly increasing and below the background count")

    try:
        return ComposedScene(
            background_ref=background_ref,
            background_count=background_count,
            object_points=PointCloud(points.astype(np.float64)),
            background_dropped=dropped,
            boxes=tuple(BoundingBox.from_yaw(b[:3], b[3:6], float(b[6])) for b in boxes),
            region=DetectionRegion(*(float(v) for v in header["region"])),
            sensor_name=sensor_name,
            seed=int(header["seed"]),
            object_ids=tuple(provenance.get("object_ids", ())),
            targets=tuple((float(x), float(y)) for x, y in provenance.get("targets", ())),
            warnings=tuple(provenance.get("warnings", ())),
        )
    except GeometryError as e:
        raise SceneRecordError(f"invalid record contents: {e}") from e


def write_scene(scene: ComposedScene, path) -> int:
    """Atomically write a record; returns its size in bytes."""
    payload = encode_scene(scene)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(path, payload)
    return len(payload)


def read_scene(path) -> ComposedScene:
    return decode_scene(Path(path).read_bytes())


def validate_scene(scene: ComposedScene, background_count: Optional[int] = None) -> list[str]:
    """Invariant violations of a decoded record (empty list when valid)."""
    problems = []
    r = scene.region
    for i, box in enumerate(scene.boxes):
        x, y = float(box.center[0]), float(box.center[1])
        if not (r.x_min <= x < r.x_max and r.y_min <= y < r.y_max):
            problems.append(f"box {i} center ({x:.3f}, {y:.3f}) outside detection region")
    if scene.object_ids and len(scene.object_ids) != len(scene.boxes):
        problems.append(f"{len(scene.object_ids)} object ids for {len(scene.boxes)} boxes")
    if len(scene.targets) != len(scene.object_ids):
        problems.append(f"{len(scene.targets)} targets for {len(scene.object_ids)} object ids")
    if background_count is not None and background_count != scene.background_count:
        problems.append(f"background has {background_count} points, record expects {scene.background_count}")
    return problems


# ──────────────────────────────────────────────
# STORES
# ──────────────────────────────────────────────

def _read_manifest(path: Path, columns: list[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, sep="\t", header=None, names=columns, dtype=str, encoding="utf-8",
                            keep_default_na=False, quoting=csv.QUOTE_NONE, skip_blank_lines=True,
                            index_col=False).fillna("")
    except pd.errors.EmptyDataError:
        raise ValueError(f"manifest {path} is empty") from None
    except pd.errors.ParserError as e:
        raise ValueError(f"manifest {path} is malformed: {e}") from None
    if (frame[columns] == "").to_numpy().any():
        raise ValueError(f"manifest {path} has rows with missing columns")
    duplicates = frame["id"][frame["id"].duplicated()]
    if not duplicates.empty:
        raise ValueError(f"manifest {path} lists id '{duplicates.iloc[0]}' more than once")
    if frame["id"].str.endswith(MIRROR_SUFFIX).any():
        raise ValueError(f"manifest ids must not end with '{MIRROR_SUFFIX}'")
    return frame


def split_mirror(store_id: str) -> tuple[str, bool]:
    if store_id.endswith(MIRROR_SUFFIX):
        return store_id[:-len(MIRROR_SUFFIX)], True
    return store_id, False


class BackgroundStore:
    """
    Backgrounds listed in a UTF-8 manifest, one `id<TAB>relative-path` per line.
    Clouds are loaded lazily and cached; `<id>#mirror` resolves to the x-axis
    mirror of `<id>`.
    """

    def __init__(self, manifest_path):
        self.manifest_path = Path(manifest_path)
        frame = _read_manifest(self.manifest_path, ["id", "path"])
        root = self.manifest_path.parent
        self.paths = {row.id: root / row.path for row in frame.itertuples(index=False)}
        self._cache: dict[str, PointCloud] = {}

    @property
    def ids(self) -> list[str]:
        return list(self.paths)

    def __contains__(self, store_id: str) -> bool:
        return split_mirror(store_id)[0] in self.paths

    def get(self, store_id: str) -> PointCloud:
        base, mirrored = split_mirror(store_id)
        if base not in self.paths:
            raise UnknownBackgroundError(f"unknown background id: {store_id}")
        if base not in self._cache:
            self._cache[base] = read_pcd(self.paths[base])
        cloud = self._cache[base]
        return mirror_x(cloud) if mirrored else cloud


class ObjectStore:
    """Object scenes listed as `id<TAB>relative-path<TAB>cx cy cz dx dy dz yaw` (yaw in radians)."""

    def __init__(self, manifest_path):
        self.manifest_path = Path(manifest_path)
        frame = _read_manifest(self.manifest_path, ["id", "path", "box"])
        root = self.manifest_path.parent
        self.paths: dict[str, Path] = {}
        self.boxes: dict[str, BoundingBox] = {}
        for line, row in enumerate(frame.itertuples(index=False), start=1):
            try:
                values = [float(v) for v in row.box.split()]
                if len(values) != 7:
                    raise ValueError(f"expected 7 box values, got {len(values)}")
                self.boxes[row.id] = BoundingBox.from_yaw(values[:3], values[3:6], values[6])
            except ValueError as e:
                raise ValueError(f"object manifest line {line}: {e}") from None
            self.paths[row.id] = root / row.path
        self._cache: dict[str, PointCloud] = {}

    @property
    def ids(self) -> list[str]:
        return list(self.paths)

    def get(self, store_id: str) -> ObjectSample:
        base, mirrored = split_mirror(store_id)
        if base not in self.paths:
            raise UnknownBackgroundError(f"unknown object id: {store_id}")
        if base not in self._cache:
            self._cache[base] = read_pcd(self.paths[base])
        scene, box = self._cache[base], self.boxes[base]
        if mirrored:
            return ObjectSample(mirror_x(scene), mirror_box(box), store_id)
        return ObjectSample(scene, box, store_id)


def reconstruct(record: ComposedScene, backgrounds: BackgroundStore, rows: int, cols: int) -> tuple[PointCloud, CenterGrid]:
    """Full cloud (surviving background in order, then object points) and its center grid."""
    background = backgrounds.get(record.background_ref)
    cloud = expand_scene(record, background)
    return cloud, rasterize_centers(record.boxes, record.region, rows, cols)
