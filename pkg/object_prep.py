# object_prep.py: bootstrap sample extraction from leveled object scenes
import logging

import numpy as np

from errors import CompositionError
from models import DetectionRegion, PointCloud, Stage

logger = logging.getLogger(__name__)


def prepare_object_sample(scene: PointCloud, region: DetectionRegion, z_threshold: float) -> PointCloud:
    """
    Keep the points of a leveled scene that lie inside the region's x/y bounds
    and above `z_threshold`, then subtract the median x and median y.
    z is left untouched.
    """
    pts = scene.points
    keep = region.contains_xy(pts[:, 0], pts[:, 1]) & (pts[:, 2] > z_threshold)
    extracted = pts[keep]
    if extracted.shape[0] == 0:
        raise CompositionError(Stage.crop.value, "empty extraction")

    centered = np.array(extracted)
    centered[:, 0] -= np.median(extracted[:, 0])
    centered[:, 1] -= np.median(extracted[:, 1])
    logger.debug(f"Extracted {extracted.shape[0]}/{len(scene)} points above z={z_threshold}")
    return PointCloud(centered)
