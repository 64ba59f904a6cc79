from src.errors import EmptyCloud
from src.instance import PointCloud, resample_fps


class ResampleOnlyHallucinator:
    """Completion switched off: the visible points are only resampled to the target count."""

    def complete(self, partial: PointCloud, target_count: int) -> PointCloud:
        if partial.real_count == 0:
            raise EmptyCloud("Partial cloud has no real points")
        return resample_fps(partial, target_count)
