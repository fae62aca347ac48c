# placement_logic.py: object extraction and perspective-consistent repositioning
"""
Objects may only move in two ways: radially along the line from the sensor
through the box center, then around the sensor's z-axis. Both keep the surface
the sensor saw facing the sensor, so the moved scan stays physically possible.
The order is fixed: radial translation FIRST, rotation SECOND.
"""
import math

import numpy as np

from errors import PlacementError
from geometry import rot_z
from models import BoundingBox, DetectionRegion, PlacementTarget, PointCloud

# Closed-interval slack for points lying exactly on a box face.
BOUNDARY_EPS = 1e-9


def crop_mask(points: np.ndarray, box: BoundingBox) -> np.ndarray:
    local = (points - box.center) @ box.rotation
    half = box.extent / 2.0 + BOUNDARY_EPS
    return np.all(np.abs(local) <= half, axis=1)


def crop_object(scene: PointCloud, box: BoundingBox) -> PointCloud:
    """Points p with Rᵀ(p − c) inside [−d/2, +d/2] on every axis (boundary kept). May be empty."""
    return scene.subset(crop_mask(scene.points, box))


def _placement_motion(box: BoundingBox, target: PlacementTarget) -> tuple[np.ndarray, np.ndarray]:
    """(t_ρ, R_ρ) for moving a leveled box to the target."""
    c0 = np.array([box.center[0], box.center[1], 0.0])
    c0_norm = float(np.hypot(c0[0], c0[1]))
    if c0_norm == 0.0:
        raise PlacementError("undefined placement direction")
    rho = target.rho
    theta = math.atan2(rho[1], rho[0]) - math.atan2(c0[1], c0[0])
    translation = target.ground_distance * c0 / c0_norm - c0
    return translation, rot_z(theta)


def place_box(box: BoundingBox, target: PlacementTarget) -> BoundingBox:
    translation, rotation = _placement_motion(box, target)
    return BoundingBox(rotation @ (box.center + translation), box.extent, rotation @ box.rotation)


def place_object(obj: PointCloud, box: BoundingBox, target: PlacementTarget) -> tuple[PointCloud, BoundingBox]:
    """
    Move a cropped, leveled object so its box center lands on the ray toward
    `target` at the target's ground distance.

    points' = R_ρ · (points + t_ρ)
      θ   = atan2(y_ρ, x_ρ) − atan2(y_c, x_c)
      t_ρ = ‖ρ‖ · c₀/‖c₀‖ − c₀,  c₀ = (x_c, y_c, 0)
    """
    translation, rotation = _placement_motion(box, target)
    placed = (obj.points + translation) @ rotation.T
    return PointCloud(placed), place_box(box, target)


def footprint_inside(box: BoundingBox, region: DetectionRegion) -> bool:
    """True when every corner of the box lies inside the region's x/y bounds."""
    xy = box.footprint_xy()
    return bool(np.all(region.contains_xy(xy[:, 0], xy[:, 1])))


def boxes_intersect(a: BoundingBox, b: BoundingBox) -> bool:
    """Separating-axis test for two oriented boxes (touching counts as intersecting)."""
    axes_a = a.rotation.T
    axes_b = b.rotation.T
    half_a = a.extent / 2.0
    half_b = b.extent / 2.0
    offset = b.center - a.center

    candidates = [axes_a[i] for i in range(3)] + [axes_b[i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            cross = np.cross(axes_a[i], axes_b[j])
            if np.linalg.norm(cross) > 1e-9:
                candidates.append(cross / np.linalg.norm(cross))

    for axis in candidates:
        ra = np.sum(half_a * np.abs(axes_a @ axis))
        rb = np.sum(half_b * np.abs(axes_b @ axis))
        if abs(offset @ axis) > ra + rb:
            return False
    return True
