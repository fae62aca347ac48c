# pcd_io.py: PCD v0.7 reader / writer (x y z, ascii and binary)
import logging
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from errors import GeometryError, PcdParseError
from models import PointCloud

logger = logging.getLogger(__name__)

_TYPE_CODES = {"F": "f", "U": "u", "I": "i"}
_VALID_SIZES = {"F": (4, 8), "U": (1, 2, 4, 8), "I": (1, 2, 4, 8)}
_ENCODINGS = ("ascii", "binary")
_REQUIRED = ("FIELDS", "SIZE", "TYPE", "WIDTH", "HEIGHT", "DATA")


# ──────────────────────────────────────────────
# WRITE
# ──────────────────────────────────────────────

def _header(n: int, encoding: str) -> bytes:
    lines = [
        "# .PCD v0.7 - Point Cloud Data file format",
        "VERSION 0.7",
        "FIELDS x y z",
        "SIZE 4 4 4",
        "TYPE F F F",
        "COUNT 1 1 1",
        f"WIDTH {n}",
        "HEIGHT 1",
        "VIEWPOINT 0 0 0 1 0 0 0",
        f"POINTS {n}",
        f"DATA {encoding}",
    ]
    return ("\n".join(lines) + "\n").encode("ascii")


def write_pcd(cloud: PointCloud, path, encoding: str = "binary") -> None:
    """
    Write x y z as float32. The file appears atomically (temp file + rename).
    Coordinates that overflow float32 are refused.
    """
    if encoding not in _ENCODINGS:
        raise ValueError(f"Unsupported PCD encoding: {encoding}")
    data = np.ascontiguousarray(cloud.points, dtype="<f4")
    if not np.all(np.isfinite(data)):
        raise GeometryError("refusing to write non-finite coordinate")

    if encoding == "binary":
        body = data.tobytes()
    else:
        body = "".join(f"{x:.9g} {y:.9g} {z:.9g}\n" for x, y, z in data.tolist()).encode("ascii")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(path, _header(data.shape[0], encoding) + body)


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ──────────────────────────────────────────────
# READ
# ──────────────────────────────────────────────

def _parse_header(raw: bytes) -> tuple[dict, int]:
    """Header fields keyed by upper-case name, plus the byte offset where the body starts."""
    header: dict[str, list[str]] = {}
    offset = 0
    while True:
        end = raw.find(b"\n", offset)
        if end < 0:
            raise PcdParseError("malformed header: missing DATA line", offset)
        line = raw[offset:end].decode("ascii", errors="replace").strip()
        line_start, offset = offset, end + 1
        if not line or line.startswith("#"):
            continue
        key, *values = line.split()
        key = key.upper()
        if not values:
            raise PcdParseError(f"malformed header: {key} has no value", line_start)
        header[key] = values
        header.setdefault("_offsets", {})[key] = line_start
        if key == "DATA":
            return header, offset


def _layout(header: dict) -> tuple[np.dtype, int]:
    offsets = header["_offsets"]
    for key in _REQUIRED:
        if key not in header:
            raise PcdParseError(f"malformed header: missing {key}", offsets.get("DATA", 0))

    fields = header["FIELDS"]
    sizes, types = header["SIZE"], header["TYPE"]
    counts = header.get("COUNT", ["1"] * len(fields))
    if not (len(fields) == len(sizes) == len(types) == len(counts)):
        raise PcdParseError("malformed header: FIELDS/SIZE/TYPE/COUNT lengths differ", offsets["FIELDS"])
    for axis in ("x", "y", "z"):
        if axis not in fields:
            raise PcdParseError(f"unsupported fields: missing '{axis}'", offsets["FIELDS"])

    try:
        width = int(header["WIDTH"][0])
        height = int(header["HEIGHT"][0])
        points = int(header["POINTS"][0]) if "POINTS" in header else width * height
        sizes = [int(s) for s in sizes]
        counts = [int(c) for c in counts]
    except ValueError:
        raise PcdParseError("malformed header: non-integer count", offsets["FIELDS"]) from None
    if width * height != points or points < 0:
        raise PcdParseError(f"count mismatch: WIDTH*HEIGHT={width * height} but POINTS={points}",
                            offsets.get("POINTS", offsets["WIDTH"]))

    dtype_fields = []
    for name, size, kind, count in zip(fields, sizes, types, counts):
        if kind not in _TYPE_CODES or size not in _VALID_SIZES[kind] or count < 1:
            raise PcdParseError(f"unsupported fields: {name} {kind}{size} x{count}", offsets["SIZE"])
        if name in ("x", "y", "z") and (kind != "F" or count != 1):
            raise PcdParseError(f"unsupported fields: {name} must be a single float", offsets["TYPE"])
        if name == "_":
            # PCL padding field; names must be unique in a numpy dtype
            name = f"_pad{len(dtype_fields)}"
        shape = (count,) if count > 1 else ()
        dtype_fields.append((name, f"<{_TYPE_CODES[kind]}{size}", shape))
    return np.dtype(dtype_fields), points


def _read_binary(raw: bytes, start: int, dtype: np.dtype, points: int) -> np.ndarray:
    body = len(raw) - start
    available = body // dtype.itemsize
    if available < points:
        raise PcdParseError(f"truncated body at point {available}", start + available * dtype.itemsize)
    if body > points * dtype.itemsize:
        raise PcdParseError(f"count mismatch: trailing bytes after point {points}", start + points * dtype.itemsize)
    return np.frombuffer(raw, dtype=dtype, count=points, offset=start)


def _read_ascii(raw: bytes, start: int, dtype: np.dtype, points: int) -> np.ndarray:
    columns = {}
    width = 0
    for name in dtype.names:
        columns[name] = width
        width += math.prod(dtype[name].shape)

    rows = np.zeros((points, 3), dtype=np.float64)
    offset = start
    i = 0
    while i < points:
        if offset >= len(raw):
            raise PcdParseError(f"truncated body at point {i}", offset)
        end = raw.find(b"\n", offset)
        end = len(raw) if end < 0 else end
        tokens = raw[offset:end].split()
        if tokens:
            if len(tokens) != width:
                raise PcdParseError(f"point {i} has {len(tokens)} values, expected {width}", offset)
            try:
                rows[i] = [float(tokens[columns[a]]) for a in ("x", "y", "z")]
            except ValueError:
                raise PcdParseError(f"non-numeric value at point {i}", offset) from None
            i += 1
        offset = end + 1
    if raw[offset:].strip():
        raise PcdParseError(f"count mismatch: trailing data after point {points}", offset)

    # declared precision wins over the printed digits
    for col, axis in enumerate(("x", "y", "z")):
        rows[:, col] = rows[:, col].astype(dtype[axis]).astype(np.float64)
    return rows


def read_pcd(path) -> PointCloud:
    """Parse an ascii or binary PCD file; only x y z are kept, in file order."""
    raw = Path(path).read_bytes()
    header, start = _parse_header(raw)
    dtype, points = _layout(header)
    encoding = header["DATA"][0].lower()

    if encoding == "binary":
        records = _read_binary(raw, start, dtype, points)
        xyz = np.column_stack([records["x"], records["y"], records["z"]])
    elif encoding == "ascii":
        xyz = _read_ascii(raw, start, dtype, points)
    else:
        raise PcdParseError(f"unsupported DATA encoding: {encoding}", header["_offsets"]["DATA"])

    xyz = xyz.astype(np.float64)
    bad = ~np.all(np.isfinite(xyz), axis=1)
    if np.any(bad):
        first = int(np.flatnonzero(bad)[0])
        raise PcdParseError(f"non-finite coordinate at point {first}",
                            start + (first * dtype.itemsize if encoding == "binary" else 0))
    logger.debug(f"Read {points} points from {path}")
    return PointCloud(xyz)
