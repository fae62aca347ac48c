# geometry.py: elementary point / angle utilities shared by every stage
import math

import numpy as np

from errors import GeometryError
from models import PointCloud, as_point3


def wrap_angle(a):
    """Wrap angle(s) in radians to (−π, π]."""
    wrapped = np.remainder(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def azimuth(p) -> float:
    """
    Azimuth of a point, atan2(y, x) in (−π, π]: 0 along +x, positive toward +y.
    z is ignored. Raises for points on the sensor z-axis.
    """
    x, y, _ = as_point3(p)
    if x == 0.0 and y == 0.0:
        raise GeometryError("undefined azimuth")
    a = math.atan2(y, x)
    return math.pi if a == -math.pi else a


def point_range(p) -> float:
    """Euclidean distance from the sensor origin, in meters."""
    x, y, z = as_point3(p)
    return math.sqrt(x * x + y * y + z * z)


def azimuths(points: np.ndarray) -> np.ndarray:
    """Vectorised azimuth; points on the z-axis get 0."""
    a = np.arctan2(points[:, 1], points[:, 0])
    return np.where(a == -np.pi, np.pi, a)


def ranges(points: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(points * points, axis=1))


def elevations(points: np.ndarray) -> np.ndarray:
    return np.arctan2(points[:, 2], np.hypot(points[:, 0], points[:, 1]))


def rot_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def skew(v) -> np.ndarray:
    """[v]ₓ such that skew(v) @ w == cross(v, w)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0]])


def mirror_x(cloud: PointCloud) -> PointCloud:
    """Reflect every point across the sensor x-axis: (x, y, z) -> (x, −y, z). Index order is kept."""
    pts = np.array(cloud.points)
    pts[:, 1] = -pts[:, 1]
    return PointCloud(pts)


def circular_mean(angles: np.ndarray) -> float:
    return math.atan2(float(np.mean(np.sin(angles))), float(np.mean(np.cos(angles))))
