# occlusion_logic.py: sector extraction and the approximate ray-intersection test
import logging
from typing import NamedTuple

import numpy as np

from constants import DEFAULT_SECTOR_TOLERANCE
from errors import OcclusionError
from geometry import azimuths, circular_mean, ranges, wrap_angle
from models import PointCloud, SectorSubsets

logger = logging.getLogger(__name__)

# Upper bound on target x occluder pairs evaluated per chunk.
_CHUNK_PAIRS = 2_000_000


class OcclusionResult(NamedTuple):
    object_kept: PointCloud
    background_dropped: np.ndarray
    sectors: SectorSubsets


def sector_subset(background: PointCloud, obj: PointCloud, epsilon: float = DEFAULT_SECTOR_TOLERANCE) -> SectorSubsets:
    """
    alpha: background points whose azimuth is inside the object's azimuth span widened by epsilon.
    beta:  alpha points no farther than the farthest object point (can occlude the object).
    gamma: alpha points no closer than the nearest object point (can be occluded by it).

    Azimuths are compared in a frame rotated so the object's circular-mean
    azimuth sits at 0, which keeps objects straddling the ±π seam contiguous.
    """
    if len(obj) == 0:
        raise OcclusionError("cannot compute sector of empty object")

    obj_az = azimuths(obj.points)
    ref = circular_mean(obj_az)
    rel_obj = wrap_angle(obj_az - ref)
    rel_bg = wrap_angle(azimuths(background.points) - ref) if len(background) else np.zeros(0)
    lo = float(np.min(rel_obj)) - epsilon
    hi = float(np.max(rel_obj)) + epsilon

    in_alpha = (rel_bg > lo) & (rel_bg < hi)
    bg_range = ranges(background.points)
    obj_range = ranges(obj.points)
    in_beta = in_alpha & (bg_range <= obj_range.max())
    in_gamma = in_alpha & (bg_range >= obj_range.min())
    return SectorSubsets(np.flatnonzero(in_alpha), np.flatnonzero(in_beta), np.flatnonzero(in_gamma))


def occluded_mask(target: np.ndarray, occluder: np.ndarray, threshold: float) -> np.ndarray:
    """
    True for target points whose sensor ray passes within `threshold` of an
    occluder point lying in front of the sensor along that ray:
        s = b · t̂ > 0,  d = sqrt(‖b‖² − s²),  drop iff min d < threshold
    """
    n = target.shape[0]
    dropped = np.zeros(n, dtype=bool)
    if n == 0 or occluder.shape[0] == 0:
        return dropped

    t_range = ranges(target)
    usable = t_range > 0.0
    unit = np.zeros_like(target)
    unit[usable] = target[usable] / t_range[usable, None]

    bx, by, bz = occluder[:, 0], occluder[:, 1], occluder[:, 2]
    b_sq = bx * bx + by * by + bz * bz
    chunk = max(1, _CHUNK_PAIRS // occluder.shape[0])
    for start in range(0, n, chunk):
        u = unit[start:start + chunk]
        s = u[:, 0:1] * bx + u[:, 1:2] * by + u[:, 2:3] * bz
        d = np.sqrt(np.maximum(b_sq - s * s, 0.0))
        d = np.where(s > 0.0, d, np.inf)
        dropped[start:start + chunk] = np.min(d, axis=1) < threshold
    dropped &= usable
    return dropped


def ray_occlude(target: PointCloud, occluder: PointCloud, threshold: float) -> tuple[PointCloud, np.ndarray]:
    """Approximate ray intersection. Returns (kept points in order, indices of dropped target points)."""
    if threshold <= 0:
        raise OcclusionError("occlusion threshold must be positive")
    dropped = occluded_mask(target.points, occluder.points, threshold)
    return target.subset(~dropped), np.flatnonzero(dropped)


def occlude_scene(background: PointCloud, obj: PointCloud, object_threshold: float,
                  background_threshold: float, epsilon: float = DEFAULT_SECTOR_TOLERANCE) -> OcclusionResult:
    """
    Object points are occluded by the beta background subset (object_threshold);
    gamma background points are occluded by the object (background_threshold).
    Background drops come back in ORIGINAL background indexing.
    """
    if background_threshold <= 0:
        raise OcclusionError("occlusion threshold must be positive")
    sectors = sector_subset(background, obj, epsilon)
    beta = background.points[sectors.beta_indices]
    gamma = background.points[sectors.gamma_indices]

    object_kept, _ = ray_occlude(obj, PointCloud(beta), object_threshold)
    gamma_dropped = occluded_mask(gamma, obj.points, background_threshold)
    background_dropped = sectors.gamma_indices[gamma_dropped]
    logger.debug(
        f"Sector alpha={len(sectors.alpha_indices)} beta={len(beta)} gamma={len(gamma)}; "
        f"object kept {len(object_kept)}/{len(obj)}, background dropped {background_dropped.size}"
    )
    return OcclusionResult(object_kept, background_dropped, sectors)
