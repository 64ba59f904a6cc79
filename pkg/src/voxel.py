import itertools
from dataclasses import dataclass
from typing import Literal

import numpy as np
import numpy.typing as npt
from loguru import logger

from src.config import Settings
from src.errors import GeometryError, IndexOutOfGrid
from src.geometry import (
    CameraIntrinsics,
    FloatArray,
    Pixel,
    Point3,
    StereoRig,
    depth_to_disparity,
    project,
)

PaddingMode = Literal["zeros", "clamp"]


@dataclass(frozen=True)
class VoxelGridSpec:
    counts: tuple[int, int, int] = (304, 20, 288)
    start: tuple[float, float, float] = (-30.0, -1.0, 2.0)
    resolution: tuple[float, float, float] = (0.2, 0.2, 0.2)

    def __post_init__(self) -> None:
        if len(self.counts) != 3 or any(int(n) != n or n < 1 for n in self.counts):
            raise GeometryError(f"Voxel counts must be three integers >= 1, got {self.counts}")
        if len(self.resolution) != 3 or any(not step > 0 for step in self.resolution):
            raise GeometryError(f"Voxel resolution must be positive, got {self.resolution}")
        if len(self.start) != 3 or not np.all(np.isfinite(self.start)):
            raise GeometryError(f"Voxel start must be three finite values, got {self.start}")

    @classmethod
    def from_settings(cls, settings: Settings) -> "VoxelGridSpec":
        return cls(
            counts=tuple(settings.voxel_counts),
            start=tuple(settings.voxel_start),
            resolution=tuple(settings.voxel_resolution),
        )

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def centers(self) -> Point3:
        """All voxel centers, shape (N_x, N_y, N_z, 3), indexed [i-1, j-1, k-1]."""
        axes = [
            start + np.arange(count, dtype=np.float64) * step
            for start, count, step in zip(self.start, self.counts, self.resolution)
        ]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class FeatureGrid2D:
    """Image-plane features, shape (height, width, channels)."""

    values: FloatArray

    def __post_init__(self) -> None:
        _validate_grid(self.values, 3, "FeatureGrid2D")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class FeatureGrid3D:
    """Cost features, shape (disparity levels, height, width, channels)."""

    values: FloatArray

    def __post_init__(self) -> None:
        _validate_grid(self.values, 4, "FeatureGrid3D")

    @property
    def levels(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[3]


@dataclass(frozen=True)
class VoxelFeatureVolume:
    spec: VoxelGridSpec
    values: FloatArray

    def __post_init__(self) -> None:
        expected = tuple(self.spec.counts)
        if self.values.ndim != 4 or self.values.shape[:3] != expected:
            raise GeometryError(
                f"Volume shape {self.values.shape} does not match grid counts {expected}"
            )

    @property
    def channels(self) -> int:
        return self.values.shape[3]


def _validate_grid(values: FloatArray, ndim: int, name: str) -> None:
    if not isinstance(values, np.ndarray) or values.ndim != ndim:
        raise GeometryError(f"{name} needs a {ndim}-d array")
    if any(d == 0 for d in values.shape):
        raise GeometryError(f"{name} dimensions must be positive, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise GeometryError(f"{name} has non-finite values")


def interpolate_grid(
    values: npt.ArrayLike, coords: npt.ArrayLike, mode: PaddingMode = "zeros"
) -> FloatArray:
    """Multilinear interpolation of ``values`` (*spatial, channels) at ``coords`` (N, k).

    Coordinates are continuous indices along the first k axes. With ``zeros`` every out-of-range
    lattice site reads zero; with ``clamp`` coordinates are clamped to the lattice first.
    """
    grid = np.asarray(values, dtype=np.float64)
    points = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    k = points.shape[1]
    spatial = np.array(grid.shape[:k])

    if mode == "clamp":
        points = np.clip(points, 0.0, spatial - 1)

    base = np.floor(points).astype(np.int64)
    frac = points - base
    result = np.zeros((points.shape[0], *grid.shape[k:]), dtype=np.float64)

    for corner in itertools.product((0, 1), repeat=k):
        offset = np.array(corner)
        index = base + offset
        weight = np.prod(np.where(offset == 1, frac, 1.0 - frac), axis=1)
        valid = np.all((index >= 0) & (index < spatial), axis=1) & (weight != 0)
        if not np.any(valid):
            continue
        picked = grid[tuple(index[valid].T)]
        result[valid] += weight[valid].reshape(-1, *([1] * (picked.ndim - 1))) * picked

    return result


def voxel_center(i: int, j: int, k: int, spec: VoxelGridSpec) -> Point3:
    """Center of the voxel with 1-based indices (i, j, k)."""
    for name, index, count in zip("ijk", (i, j, k), spec.counts):
        if not 1 <= index <= count:
            raise IndexOutOfGrid(f"Index {name}={index} outside 1..{count}")
    return np.array(
        [
            start + (index - 1) * step
            for start, index, step in zip(spec.start, (i, j, k), spec.resolution)
        ],
        dtype=np.float64,
    )


def bilinear_sample(grid: FeatureGrid2D, px: Pixel) -> FloatArray:
    """Channel vector at pixel (u, v); u indexes columns, v rows."""
    pixels = np.atleast_2d(np.asarray(px, dtype=np.float64))
    sampled = interpolate_grid(grid.values, pixels[:, ::-1])
    return sampled[0] if np.ndim(px) == 1 else sampled


def trilinear_sample(grid: FeatureGrid3D, index: npt.ArrayLike) -> FloatArray:
    """Channel vector at continuous (u, v, disparity) indices."""
    uvd = np.atleast_2d(np.asarray(index, dtype=np.float64))
    sampled = interpolate_grid(grid.values, uvd[:, [2, 1, 0]])
    return sampled[0] if np.ndim(index) == 1 else sampled


def voxel_to_cost_index(v: Point3, rig: StereoRig, downsample: int) -> FloatArray:
    """Continuous (u, v, disparity) indices of a CCS point in a downsampled cost volume."""
    if downsample < 1:
        raise GeometryError(f"Downsample factor must be >= 1, got {downsample}")
    point = np.asarray(v, dtype=np.float64)
    pixel = project(point, rig.left)
    disparity = np.asarray(depth_to_disparity(point[..., 2], rig))
    return np.concatenate([pixel, disparity[..., None]], axis=-1) / downsample


def aggregate_features(
    spec: VoxelGridSpec,
    intrinsics: CameraIntrinsics,
    rig: StereoRig,
    semantic: FeatureGrid2D,
    cost: FeatureGrid3D,
    downsample: int,
    chunk_voxels: int = 1 << 18,
) -> VoxelFeatureVolume:
    """Warp cost and semantic features onto every voxel; cost channels come first.

    Both feature grids are indexed at ``1/downsample`` of the image resolution. Voxels behind the
    camera or projecting outside a grid receive zeros.
    """
    if downsample < 1:
        raise GeometryError(f"Downsample factor must be >= 1, got {downsample}")

    centers = spec.centers().reshape(-1, 3)
    channels = cost.channels + semantic.channels
    out = np.zeros((centers.shape[0], channels), dtype=np.float64)
    logger.debug(
        f"Aggregating {channels} channels onto {centers.shape[0]} voxels "
        f"(downsample {downsample})"
    )

    for start in range(0, centers.shape[0], chunk_voxels):
        chunk = centers[start : start + chunk_voxels]
        in_front = chunk[:, 2] > 0
        if not np.any(in_front):
            continue
        visible = chunk[in_front]

        pixel = project(visible, intrinsics) / downsample
        disparity = depth_to_disparity(visible[:, 2], rig) / downsample
        cost_coords = np.stack([disparity, pixel[:, 1], pixel[:, 0]], axis=1)

        rows = np.flatnonzero(in_front) + start
        out[rows, : cost.channels] = interpolate_grid(cost.values, cost_coords)
        out[rows, cost.channels :] = interpolate_grid(semantic.values, pixel[:, ::-1])

    return VoxelFeatureVolume(spec=spec, values=out.reshape(*spec.counts, channels))


def bev_reduce(volume: VoxelFeatureVolume) -> FloatArray:
    """Average over the height axis: (N_x, N_y, N_z, C) -> (N_x, N_z, C)."""
    return volume.values.mean(axis=1)
