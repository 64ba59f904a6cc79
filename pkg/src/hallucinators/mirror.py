import numpy as np
from loguru import logger

from src.enums import Frame
from src.errors import EmptyCloud
from src.instance import PointCloud, resample_fps


def reflect_lateral(points: np.ndarray) -> np.ndarray:
    """Mirror across the object-frame z = 0 plane (the width axis)."""
    return points * np.array([1.0, 1.0, -1.0])


def mirror_hallucinate(partial: PointCloud, n_c: int) -> PointCloud:
    """Complete a partial object-frame cloud by lateral symmetry, resampled to ``n_c`` points."""
    if partial.frame != Frame.ocs:
        raise ValueError(f"Mirror completion needs an ocs cloud, got {partial.frame.value}")
    visible = partial.real_points
    if visible.shape[0] == 0:
        raise EmptyCloud("Partial cloud has no real points")

    # exact negation keeps symmetric inputs identical to their own reflection
    union = np.unique(np.concatenate([visible, reflect_lateral(visible)]), axis=0)
    logger.debug(f"Mirrored {visible.shape[0]} points into {union.shape[0]} unique points")
    return resample_fps(PointCloud(points=union, frame=Frame.ocs), n_c)


class MirrorHallucinator:
    def complete(self, partial: PointCloud, target_count: int) -> PointCloud:
        return mirror_hallucinate(partial, target_count)
