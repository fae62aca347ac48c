# leveling_logic.py: ground-plane estimation and the leveling / unleveling motions
"""
A scene is leveled by
  1. laying a G x G grid over a region in front of the sensor at the minimum
     scene z (build_ground_grid),
  2. taking the scene points nearest to the grid points as ground points
     (extract_ground_points),
  3. fitting z = b0 + b1·x + b2·y to them by least squares (fit_ground_plane),
  4. rotating the plane normal onto +z with Rodrigues' formula and shifting the
     rotated plane down to z = 0 (level_transform).
"""
import logging

import numpy as np
from scipy.spatial import cKDTree

from constants import DEFAULT_GRID_SIZE
from errors import LevelingError
from geometry import skew
from models import BoundingBox, GroundPlane, GroundRegion, LevelTransform, PointCloud

logger = logging.getLogger(__name__)

# Normal-matrix condition number above which the fit is rejected.
MAX_CONDITION = 1e12


def build_ground_grid(cloud: PointCloud, x_min: float, x_max: float, y_max: float,
                      grid_size: int = DEFAULT_GRID_SIZE, percentile: float = 0.0) -> PointCloud:
    """
    G x G points evenly spaced over [x_min, x_max] x [−y_max, y_max] (inclusive),
    all at the minimum z of the in-region scene points.

    percentile > 0 uses that percentile of in-region z instead of the minimum,
    so a single spurious low return cannot pin the whole grid.
    """
    if grid_size < 1:
        raise LevelingError("grid size must be a positive integer")
    region = GroundRegion(x_min, x_max, y_max)
    in_region = cloud.points[region.mask(cloud.points)]
    if in_region.shape[0] == 0:
        raise LevelingError("no points in ground grid region")

    if percentile > 0.0:
        z = float(np.percentile(in_region[:, 2], percentile))
    else:
        z = float(np.min(in_region[:, 2]))

    xs = np.linspace(x_min, x_max, grid_size)
    ys = np.linspace(-y_max, y_max, grid_size)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)])
    return PointCloud(grid)


def ground_point_indices(cloud: PointCloud, grid: PointCloud, region: GroundRegion) -> np.ndarray:
    """Original indices (ascending, unique) of in-region points that are the 3D nearest neighbour of a grid point."""
    if len(grid) == 0:
        raise LevelingError("ground grid is empty")
    candidates = np.flatnonzero(region.mask(cloud.points))
    if candidates.size == 0:
        return candidates
    tree = cKDTree(cloud.points[candidates])
    _, nearest = tree.query(grid.points, k=1)
    return candidates[np.unique(nearest)]


def extract_ground_points(cloud: PointCloud, grid: PointCloud, region: GroundRegion) -> PointCloud:
    return cloud.subset(ground_point_indices(cloud, grid, region))


def fit_ground_plane(ground: PointCloud) -> GroundPlane:
    """Ordinary least squares of z on (1, x, y)."""
    pts = ground.points
    if pts.shape[0] < 3:
        raise LevelingError("degenerate ground fit: need at least 3 ground points")

    # Centering keeps the normal matrix well conditioned far from the origin.
    mean = pts.mean(axis=0)
    dx = pts[:, 0] - mean[0]
    dy = pts[:, 1] - mean[1]
    design = np.column_stack([dx, dy])
    normal_matrix = design.T @ design
    if np.linalg.matrix_rank(normal_matrix) < 2 or np.linalg.cond(normal_matrix) > MAX_CONDITION:
        raise LevelingError("degenerate ground fit: ground points are collinear in xy")

    (b1, b2), *_ = np.linalg.lstsq(design, pts[:, 2] - mean[2], rcond=None)
    b0 = mean[2] - b1 * mean[0] - b2 * mean[1]
    return GroundPlane(float(b0), float(b1), float(b2))


def level_transform(plane: GroundPlane) -> LevelTransform:
    """
    R = I + [v]ₓ + [v]ₓ² / (1 + h_𝟙·ẑ) with v = h_𝟙 × ẑ, so R·h_𝟙 = ẑ.

    The rotated plane sits at height b0 / ‖h‖ (its offset along the unit
    normal); that is the z translation. For a level plane it equals b0.
    """
    h1 = plane.unit_normal
    v = np.cross(h1, np.array([0.0, 0.0, 1.0]))
    vx = skew(v)
    rotation = np.eye(3) + vx + (vx @ vx) / (1.0 + h1[2])
    return LevelTransform(rotation, np.array([0.0, 0.0, plane.b0 * h1[2]]))


def level(cloud: PointCloud, t: LevelTransform) -> PointCloud:
    """p -> R·p − t for every point; index order preserved."""
    return PointCloud(cloud.points @ t.rotation.T - t.translation)


def unlevel(cloud: PointCloud, t: LevelTransform) -> PointCloud:
    """Exact inverse of level: p -> Rᵀ·(p + t)."""
    return PointCloud((cloud.points + t.translation) @ t.rotation)


def level_box(box: BoundingBox, t: LevelTransform) -> BoundingBox:
    return BoundingBox(t.rotation @ box.center - t.translation, box.extent, t.rotation @ box.rotation)


def unlevel_box(box: BoundingBox, t: LevelTransform) -> BoundingBox:
    return BoundingBox(t.rotation.T @ (box.center + t.translation), box.extent, t.rotation.T @ box.rotation)


def estimate_level_transform(cloud: PointCloud, region: GroundRegion,
                             grid_size: int = DEFAULT_GRID_SIZE,
                             percentile: float = 0.0) -> tuple[LevelTransform, GroundPlane]:
    """Full leveling procedure for one scene."""
    grid = build_ground_grid(cloud, region.x_min, region.x_max, region.y_max, grid_size, percentile)
    ground = extract_ground_points(cloud, grid, region)
    plane = fit_ground_plane(ground)
    logger.debug(f"Ground plane from {len(ground)} points: b0={plane.b0:.4f} b1={plane.b1:.5f} b2={plane.b2:.5f}")
    return level_transform(plane), plane
