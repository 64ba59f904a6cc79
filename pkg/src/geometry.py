"""Pinhole and rectified-stereo camera models. Camera frame: z forward, y down."""

import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from src.errors import GeometryError, NonPositiveDepth, NonPositiveDisparity

FloatArray = npt.NDArray[np.float64]

# (..., 3) metric points and (..., 2) pixel coordinates.
Point3 = FloatArray
Pixel = FloatArray


def _as_float_array(values: npt.ArrayLike, last_dim: int, name: str) -> FloatArray:
    array = np.asarray(values, dtype=np.float64)
    if array.shape[-1:] != (last_dim,):
        raise GeometryError(f"{name} must have trailing dimension {last_dim}, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise GeometryError(f"{name} has non-finite components")
    return array


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        values = (self.fx, self.fy, self.cx, self.cy)
        if not all(math.isfinite(v) for v in values):
            raise GeometryError(f"Intrinsics must be finite, got {values}")
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError(f"Focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> FloatArray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )

    @classmethod
    def from_matrix(cls, matrix: npt.ArrayLike) -> "CameraIntrinsics":
        k = np.asarray(matrix, dtype=np.float64)
        return cls(fx=float(k[0, 0]), fy=float(k[1, 1]), cx=float(k[0, 2]), cy=float(k[1, 2]))


@dataclass(frozen=True)
class StereoRig:
    left: CameraIntrinsics
    baseline_m: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.baseline_m) or self.baseline_m <= 0:
            raise GeometryError(f"Baseline must be positive, got {self.baseline_m}")

    @property
    def focal(self) -> float:
        return self.left.fx


@dataclass(frozen=True)
class Pose2DYaw:
    translation: tuple[float, float, float]
    yaw: float = field(default=0.0)

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (*self.translation, self.yaw)):
            raise GeometryError("Pose components must be finite")
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def rotation(self) -> FloatArray:
        return yaw_rotation(self.yaw)

    def apply(self, points: npt.ArrayLike) -> Point3:
        p = _as_float_array(points, 3, "points")
        return p @ self.rotation.T + np.asarray(self.translation, dtype=np.float64)


def project(points: npt.ArrayLike, intrinsics: CameraIntrinsics) -> Pixel:
    p = _as_float_array(points, 3, "points")
    z = p[..., 2]
    if np.any(z <= 0):
        raise NonPositiveDepth(f"Cannot project points with z <= 0 (min z = {z.min()})")

    u = intrinsics.fx * p[..., 0] / z + intrinsics.cx
    v = intrinsics.fy * p[..., 1] / z + intrinsics.cy
    return np.stack([u, v], axis=-1)


def backproject(
    pixels: npt.ArrayLike, depth: npt.ArrayLike, intrinsics: CameraIntrinsics
) -> Point3:
    px = _as_float_array(pixels, 2, "pixels")
    d = np.asarray(depth, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise NonPositiveDepth("Depth must be finite and positive")

    x = (px[..., 0] - intrinsics.cx) / intrinsics.fx * d
    y = (px[..., 1] - intrinsics.cy) / intrinsics.fy * d
    return np.stack(np.broadcast_arrays(x, y, d), axis=-1)


def disparity_to_depth(disparity: npt.ArrayLike, rig: StereoRig):
    disp = np.asarray(disparity, dtype=np.float64)
    if np.any(~np.isfinite(disp)) or np.any(disp <= 0):
        raise NonPositiveDisparity("Disparity must be finite and positive")
    depth = rig.focal * rig.baseline_m / disp
    return float(depth) if depth.ndim == 0 else depth


def depth_to_disparity(depth: npt.ArrayLike, rig: StereoRig):
    d = np.asarray(depth, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise NonPositiveDepth("Depth must be finite and positive")
    disparity = rig.focal * rig.baseline_m / d
    return float(disparity) if disparity.ndim == 0 else disparity


def yaw_rotation(theta: float) -> FloatArray:
    """Rotation about the camera y axis; maps +x to (cos, 0, -sin)."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]], dtype=np.float64)
