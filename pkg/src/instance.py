import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Union

import numpy as np
import numpy.typing as npt
from loguru import logger

from src.enums import Frame, OcsScale
from src.errors import DegenerateBox, EmptyCloud, EmptyMask, GeometryError
from src.geometry import (
    CameraIntrinsics,
    FloatArray,
    StereoRig,
    backproject,
    disparity_to_depth,
    normalize_angle,
    yaw_rotation,
)

# Corner signs in (length, height, width) order, KITTI corner ordering.
_CORNER_SIGNS = np.array(
    [
        [1, 1, 1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, 1, 1],
        [1, -1, 1],
        [1, -1, -1],
        [-1, -1, -1],
        [-1, -1, 1],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class Box3D:
    """Box centered at (x, y, z) in the camera frame, size (h, w, l), yaw about the y axis."""

    x: float
    y: float
    z: float
    h: float
    w: float
    l: float  # noqa: E741
    yaw: float = 0.0
    score: Optional[float] = None

    def __post_init__(self) -> None:
        values = (self.x, self.y, self.z, self.h, self.w, self.l, self.yaw)
        if not all(math.isfinite(v) for v in values):
            raise DegenerateBox(f"Box parameters must be finite, got {values}")
        if self.h <= 0 or self.w <= 0 or self.l <= 0:
            raise DegenerateBox(f"Box size must be positive, got h={self.h} w={self.w} l={self.l}")
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @classmethod
    def from_kitti(
        cls,
        location: tuple[float, float, float],
        dimensions: tuple[float, float, float],
        rotation_y: float,
        score: Optional[float] = None,
    ) -> "Box3D":
        """KITTI stores the bottom-face center; the box center sits h/2 above it."""
        h, w, l = dimensions  # noqa: E741
        x, y, z = location
        return cls(x=x, y=y - h / 2.0, z=z, h=h, w=w, l=l, yaw=rotation_y, score=score)

    def kitti_location(self) -> tuple[float, float, float]:
        return (self.x, self.y + self.h / 2.0, self.z)

    @property
    def center(self) -> FloatArray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @property
    def volume(self) -> float:
        return self.h * self.w * self.l

    def corners(self) -> FloatArray:
        """The 8 corners in the camera frame, shape (8, 3)."""
        half = np.array([self.l, self.h, self.w]) / 2.0
        return (_CORNER_SIGNS * half) @ yaw_rotation(self.yaw).T + self.center

    def bev_corners(self) -> FloatArray:
        """Ground-plane footprint as (x, z) pairs, shape (4, 2)."""
        return self.corners()[:4][:, [0, 2]]

    def height_range(self) -> tuple[float, float]:
        return (self.y - self.h / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class PointCloud:
    points: FloatArray
    frame: Frame
    padding: FloatArray = field(default=None)

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise GeometryError("Point cloud has non-finite points")
        padding = (
            np.zeros(points.shape[0], dtype=bool)
            if self.padding is None
            else np.asarray(self.padding, dtype=bool)
        )
        if padding.shape != (points.shape[0],):
            raise GeometryError("Padding flags must align with points")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "padding", padding)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def real_points(self) -> FloatArray:
        return self.points[~self.padding]

    @property
    def real_count(self) -> int:
        return int(np.count_nonzero(~self.padding))


@dataclass(frozen=True)
class ForegroundMask:
    """Foreground pixels of a RoI with their disparities.

    ``pixels`` are (u, v) relative to the RoI; ``origin`` is the RoI top-left in the image.
    """

    width: int
    height: int
    pixels: FloatArray
    disparities: FloatArray
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels, dtype=np.float64).reshape(-1, 2)
        disparities = np.asarray(self.disparities, dtype=np.float64).reshape(-1)
        if pixels.shape[0] != disparities.shape[0]:
            raise GeometryError("Every foreground pixel needs one disparity")
        if self.width < 1 or self.height < 1:
            raise GeometryError(f"RoI size must be positive, got {self.width}x{self.height}")
        inside = (
            (pixels[:, 0] >= 0)
            & (pixels[:, 0] < self.width)
            & (pixels[:, 1] >= 0)
            & (pixels[:, 1] < self.height)
        )
        if not np.all(inside):
            outside = np.count_nonzero(~inside)
            raise GeometryError(f"{outside} foreground pixels lie outside the RoI")
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "disparities", disparities)

    def __len__(self) -> int:
        return self.pixels.shape[0]

    @property
    def image_pixels(self) -> FloatArray:
        return self.pixels + np.asarray(self.origin, dtype=np.float64)


@dataclass(frozen=True)
class SampledForeground:
    pixels: FloatArray
    disparities: FloatArray
    padding: FloatArray


@dataclass(frozen=True)
class ShapeCode:
    values: FloatArray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise GeometryError("Shape code has non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def dimension(self) -> int:
        return self.values.shape[0]


class Hallucinator(Protocol):
    def complete(self, partial: PointCloud, target_count: int) -> PointCloud: ...


def sample_foreground(mask: ForegroundMask, e: int, seed: int) -> SampledForeground:
    """Pick exactly ``e`` foreground entries; pad with flagged zeros when the mask is smaller."""
    if e < 1:
        raise ValueError(f"Sample count must be >= 1, got {e}")
    if len(mask) == 0:
        raise EmptyMask("Foreground mask has no pixels")

    rng = np.random.default_rng(seed)
    if len(mask) >= e:
        chosen = rng.choice(len(mask), size=e, replace=False)
        return SampledForeground(
            pixels=mask.image_pixels[chosen],
            disparities=mask.disparities[chosen],
            padding=np.zeros(e, dtype=bool),
        )

    missing = e - len(mask)
    logger.debug(f"Mask has {len(mask)} pixels, padding {missing} entries")
    return SampledForeground(
        pixels=np.concatenate([mask.image_pixels, np.zeros((missing, 2))]),
        disparities=np.concatenate([mask.disparities, np.zeros(missing)]),
        padding=np.concatenate([np.zeros(len(mask), dtype=bool), np.ones(missing, dtype=bool)]),
    )


def extract_visible(
    mask: ForegroundMask, rig: StereoRig, intrinsics: CameraIntrinsics, e: int, seed: int
) -> PointCloud:
    """Back-project ``e`` sampled foreground pixels to the camera frame; padding stays at 0."""
    sampled = sample_foreground(mask, e, seed)
    real = ~sampled.padding

    points = np.zeros((e, 3), dtype=np.float64)
    depth = disparity_to_depth(sampled.disparities[real], rig)
    points[real] = backproject(sampled.pixels[real], depth, intrinsics)
    return PointCloud(points=points, frame=Frame.ccs, padding=sampled.padding)


def _ocs_scale(box: Box3D, scale: OcsScale) -> FloatArray:
    if scale == OcsScale.per_axis:
        return np.array([box.l, box.h, box.w], dtype=np.float64)
    return np.full(3, box.l, dtype=np.float64)


def ocs_matrix(box: Box3D, scale: OcsScale = OcsScale.uniform_l) -> FloatArray:
    """Homogeneous 4x4 map from the object frame to the camera frame."""
    matrix = np.eye(4)
    matrix[:3, :3] = yaw_rotation(box.yaw) * _ocs_scale(box, scale)
    matrix[:3, 3] = box.center
    return matrix


def _require_frame(cloud: PointCloud, frame: Frame) -> None:
    if cloud.frame != frame:
        raise GeometryError(f"Expected a {frame.value} cloud, got {cloud.frame.value}")


def ocs_transform(
    cloud: PointCloud, box: Box3D, scale: OcsScale = OcsScale.uniform_l
) -> PointCloud:
    _require_frame(cloud, Frame.ccs)
    rotation = yaw_rotation(box.yaw)
    points = (cloud.points - box.center) @ rotation / _ocs_scale(box, scale)
    points[cloud.padding] = 0.0
    return PointCloud(points=points, frame=Frame.ocs, padding=cloud.padding)


def ocs_inverse(
    cloud: PointCloud, box: Box3D, scale: OcsScale = OcsScale.uniform_l
) -> PointCloud:
    _require_frame(cloud, Frame.ocs)
    rotation = yaw_rotation(box.yaw)
    points = (cloud.points * _ocs_scale(box, scale)) @ rotation.T + box.center
    points[cloud.padding] = 0.0
    return PointCloud(points=points, frame=Frame.ccs, padding=cloud.padding)


def farthest_point_indices(points: npt.ArrayLike, n: int) -> npt.NDArray[np.int64]:
    """Deterministic farthest-point order starting at the max-norm point.

    For ``n`` beyond the cloud size the full order is repeated cyclically.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if p.shape[0] == 0:
        raise EmptyCloud("Cannot resample an empty cloud")
    if n < 1:
        raise ValueError(f"Resample count must be >= 1, got {n}")

    count = min(n, p.shape[0])
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = int(np.argmax(np.einsum("ij,ij->i", p, p)))
    distance = np.einsum("ij,ij->i", p - p[chosen[0]], p - p[chosen[0]])
    distance[chosen[0]] = -1.0

    for i in range(1, count):
        chosen[i] = int(np.argmax(distance))
        offset = p - p[chosen[i]]
        # chosen entries hold -1 and stay there under the minimum
        distance = np.minimum(distance, np.einsum("ij,ij->i", offset, offset))
        distance[chosen[i]] = -1.0

    if n > count:
        chosen = chosen[np.arange(n) % count]
    return chosen


def resample_fps(cloud: Union[PointCloud, npt.ArrayLike], n: int) -> PointCloud:
    if isinstance(cloud, PointCloud):
        points, frame = cloud.real_points, cloud.frame
    else:
        points, frame = np.asarray(cloud, dtype=np.float64).reshape(-1, 3), Frame.ocs
    return PointCloud(points=points[farthest_point_indices(points, n)], frame=frame)
