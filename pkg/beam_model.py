# beam_model.py: sensor beam grid and the beam resampler for placed objects
import logging
import math
from functools import lru_cache

import numpy as np

from constants import SENSOR_PRESETS
from geometry import azimuths, circular_mean, elevations, ranges, wrap_angle
from models import BeamGrid, PointCloud, SensorModel

logger = logging.getLogger(__name__)

DEFAULT_BEAM_THRESHOLD = 0.04  # meters
# Upper bound on beam x point pairs evaluated per chunk.
_CHUNK_PAIRS = 4_000_000


def sensor_from_preset(name: str) -> SensorModel:
    try:
        preset = SENSOR_PRESETS[name]
    except KeyError:
        raise ValueError(f"Unknown sensor preset: {name}") from None
    return SensorModel.evenly_spaced(name, preset["elevation_min"], preset["elevation_max"],
                                     preset["elevation_count"], preset["azimuth_count"])


@lru_cache(maxsize=8)
def beam_directions(sensor: SensorModel) -> BeamGrid:
    """
    One unit direction per (elevation, azimuth) pair:
        (cos e·cos a, cos e·sin a, sin e)
    Beam index = elevation_index * n_azim + azimuth_index. Cached per sensor.
    """
    elev = np.radians(np.asarray(sensor.elevation_angles, dtype=np.float64))
    azim = np.radians(sensor.azimuth_angles)
    e, a = np.meshgrid(elev, azim, indexing="ij")
    e, a = e.ravel(), a.ravel()
    directions = np.column_stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)])
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    for arr in (directions, e, a):
        arr.flags.writeable = False
    return BeamGrid(directions, e, a, len(sensor.elevation_angles), sensor.azimuth_count)


def candidate_beams(grid: BeamGrid, obj: PointCloud, margin: float) -> np.ndarray:
    """
    Indices (ascending) of beams whose elevation and azimuth fall inside the
    object's angular bounding window widened by `margin`. The azimuth margin
    is widened by 1/cos(elevation) so it covers the same angular distance near
    the poles.
    """
    if len(obj) == 0:
        return np.zeros(0, dtype=np.int64)

    obj_elev = elevations(obj.points)
    e_lo = float(obj_elev.min()) - margin
    e_hi = float(obj_elev.max()) + margin
    in_elev = (grid.elevations >= e_lo) & (grid.elevations <= e_hi)

    widest = max(abs(e_lo), abs(e_hi))
    az_margin = math.inf if widest >= math.pi / 2 else margin / math.cos(widest)
    if az_margin >= math.pi:
        return np.flatnonzero(in_elev)

    obj_az = azimuths(obj.points)
    ref = circular_mean(obj_az)
    rel = wrap_angle(obj_az - ref)
    a_lo = float(rel.min()) - az_margin
    a_hi = float(rel.max()) + az_margin
    if a_hi - a_lo >= 2 * math.pi:
        return np.flatnonzero(in_elev)
    beam_rel = wrap_angle(grid.azimuths - ref)
    in_azim = (beam_rel >= a_lo) & (beam_rel <= a_hi)
    return np.flatnonzero(in_elev & in_azim)


def _default_margin(obj: PointCloud, threshold: float) -> float:
    # A point within `threshold` of a beam is at most asin(threshold / r) away from it in angle.
    r_min = float(ranges(obj.points).min())
    if r_min <= threshold:
        return 2 * math.pi
    return math.asin(threshold / r_min) * 1.01 + 1e-9


def resample_object_beams(obj: PointCloud, grid: BeamGrid, threshold: float = DEFAULT_BEAM_THRESHOLD,
                          margin: float | None = None) -> tuple[PointCloud, np.ndarray]:
    """
    Re-render an object surface on the beam grid. For every beam l_a:
      d_{a,i} = sqrt(‖o_i‖² − (o_i·l_a)²) over object points with o_i·l_a > 0
      ≥ 2 points with d < L  -> average of the two closest projections (o_i·l_a)·l_a
      1 point with d < L     -> its projection, only if d < L/2
      otherwise              -> nothing
    Ties between equally close points go to the lower point index.
    Returns (points ordered by beam index, beam index of every point).
    """
    if threshold <= 0:
        raise ValueError("beam threshold must be positive")
    if len(obj) == 0:
        return PointCloud.empty(), np.zeros(0, dtype=np.int64)
    if margin is None:
        margin = _default_margin(obj, threshold)

    beams = candidate_beams(grid, obj, margin)
    pts = obj.points
    px, py, pz = pts[:, 0], pts[:, 1], pts[:, 2]
    p_sq = px * px + py * py + pz * pz

    out_points = []
    out_beams = []
    chunk = max(1, _CHUNK_PAIRS // pts.shape[0])
    for start in range(0, beams.size, chunk):
        idx = beams[start:start + chunk]
        dirs = grid.directions[idx]
        s = dirs[:, 0:1] * px + dirs[:, 1:2] * py + dirs[:, 2:3] * pz
        d = np.sqrt(np.maximum(p_sq - s * s, 0.0))
        d = np.where((s > 0.0) & (d < threshold), d, np.inf)

        hits = np.sum(np.isfinite(d), axis=1)
        active = hits > 0
        if not np.any(active):
            continue
        d, s, dirs, idx, hits = d[active], s[active], dirs[active], idx[active], hits[active]
        rows = np.arange(d.shape[0])

        # argmin returns the first occurrence, i.e. the lower point index on ties
        first = np.argmin(d, axis=1)
        d_first = d[rows, first]
        masked = d.copy()
        masked[rows, first] = np.inf
        second = np.argmin(masked, axis=1)

        s_first = s[rows, first]
        s_second = s[rows, second]
        pair = hits >= 2
        single = (hits == 1) & (d_first < threshold / 2.0)
        emit = pair | single
        scale = np.where(pair, (s_first + s_second) / 2.0, s_first)

        out_points.append(dirs[emit] * scale[emit, None])
        out_beams.append(idx[emit])

    if not out_points:
        return PointCloud.empty(), np.zeros(0, dtype=np.int64)
    return PointCloud(np.vstack(out_points)), np.concatenate(out_beams)


def resample_object(obj: PointCloud, grid: BeamGrid, threshold: float = DEFAULT_BEAM_THRESHOLD,
                    margin: float | None = None) -> PointCloud:
    cloud, _ = resample_object_beams(obj, grid, threshold, margin)
    return cloud
