"""Isosurface extraction; vertices are welded by the lattice edge they sit on."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from loguru import logger

from src.errors import EmptyMesh, GeometryError, InvalidPartition
from src.geometry import FloatArray

from ._tables import CORNER_OFFSETS, EDGE_CORNERS, TRIANGLE_TABLE
from .fields import OccupancyField, SampleGrid, UniformGridSpec, field_gradient, query_field

# Triangles below this fraction of a cell face are dropped as degenerate.
_MIN_AREA_FRACTION = 1e-12


@dataclass(frozen=True)
class TriangleMesh:
    vertices: FloatArray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= vertices.shape[0]):
            raise GeometryError("Triangle indices out of range")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(vertices=np.zeros((0, 3)), triangles=np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self) -> bool:
        return self.triangles.shape[0] == 0

    def __len__(self) -> int:
        return self.triangles.shape[0]

    def corners(self) -> FloatArray:
        """Triangle corner positions, shape (T, 3, 3)."""
        return self.vertices[self.triangles]

    def triangle_areas(self) -> FloatArray:
        a, b, c = np.moveaxis(self.corners(), 1, 0)
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def surface_area(self) -> float:
        return float(self.triangle_areas().sum())

    def centroids(self) -> FloatArray:
        return self.corners().mean(axis=1)

    def bounds(self) -> tuple[FloatArray, FloatArray]:
        if self.vertices.shape[0] == 0:
            raise EmptyMesh("An empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _case_indices(below: np.ndarray) -> np.ndarray:
    nx, ny, nz = below.shape
    cases = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for corner, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        corner_below = below[dx : dx + nx - 1, dy : dy + ny - 1, dz : dz + nz - 1]
        cases |= corner_below.astype(np.int64) << corner
    return cases


def _orient(
    field: OccupancyField, vertices: FloatArray, triangles: np.ndarray, step: float
) -> np.ndarray:
    a, b, c = np.moveaxis(vertices[triangles], 1, 0)
    normals = np.cross(b - a, c - a)
    gradient = field_gradient(field, (a + b + c) / 3.0, step=step)
    flip = np.einsum("ij,ij->i", normals, gradient) > 0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def marching_cubes(
    field: OccupancyField, spec: UniformGridSpec, iso: float = 0.5
) -> TriangleMesh:
    """Triangulate the ``iso`` level set of ``field`` sampled on ``spec``.

    Returns an empty mesh when no cell straddles ``iso``.
    """
    node_shape = tuple(spec.counts)
    values = query_field(field, SampleGrid.from_uniform(spec)).reshape(node_shape)
    cases = _case_indices(values < iso)

    active = np.flatnonzero((cases != 0) & (cases != 255))
    if active.size == 0:
        logger.warning(f"No cell crosses iso level {iso}; returning an empty mesh")
        return TriangleMesh.empty()

    cells = np.stack(np.unravel_index(active, cases.shape), axis=1)
    # last column is the row terminator
    rows = TRIANGLE_TABLE[cases.reshape(-1)[active], :15].reshape(-1, 5, 3)
    cell_slot, tri_slot = np.nonzero(rows[:, :, 0] >= 0)
    edges = rows[cell_slot, tri_slot]

    first = CORNER_OFFSETS[EDGE_CORNERS[edges, 0]]
    second = CORNER_OFFSETS[EDGE_CORNERS[edges, 1]]
    origins = cells[cell_slot][:, None, :] + np.minimum(first, second)
    axes = np.argmax(np.abs(second - first), axis=-1)

    n_nodes = int(np.prod(node_shape))
    edge_ids = axes.reshape(-1) * n_nodes + np.ravel_multi_index(
        tuple(origins.reshape(-1, 3).T), node_shape
    )
    unique_ids, inverse = np.unique(edge_ids, return_inverse=True)
    triangles = inverse.reshape(-1, 3)

    start = np.stack(np.unravel_index(unique_ids % n_nodes, node_shape), axis=1)
    end = start + np.eye(3, dtype=np.int64)[unique_ids // n_nodes]
    v0 = values[tuple(start.T)]
    v1 = values[tuple(end.T)]
    t = np.clip((iso - v0) / (v1 - v0), 0.0, 1.0)
    lattice = start + t[:, None] * (end - start)
    vertices = np.asarray(spec.lower) + lattice * spec.cell_size

    a, b, c = np.moveaxis(vertices[triangles], 1, 0)
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    distinct = (
        (triangles[:, 0] != triangles[:, 1])
        & (triangles[:, 1] != triangles[:, 2])
        & (triangles[:, 0] != triangles[:, 2])
    )
    face_area = float(np.sort(spec.cell_size)[:2].prod())
    keep = distinct & (areas > _MIN_AREA_FRACTION * face_area)
    if not np.all(keep):
        logger.debug(f"Dropping {np.count_nonzero(~keep)} degenerate triangles")
    triangles = triangles[keep]
    if triangles.shape[0] == 0:
        logger.warning("Every triangle was degenerate; returning an empty mesh")
        return TriangleMesh.empty()

    used = np.unique(triangles)
    remap = np.full(vertices.shape[0], -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    vertices, triangles = vertices[used], remap[triangles]

    triangles = _orient(field, vertices, triangles, step=1e-2 * float(spec.cell_size.min()))
    logger.debug(
        f"Marching cubes over {node_shape} nodes: {vertices.shape[0]} vertices, "
        f"{triangles.shape[0]} triangles"
    )
    return TriangleMesh(vertices=vertices, triangles=triangles)


def concatenate_meshes(meshes: Sequence[TriangleMesh]) -> TriangleMesh:
    """Stack meshes without welding shared vertices."""
    meshes = [mesh for mesh in meshes if not mesh.is_empty]
    if not meshes:
        return TriangleMesh.empty()
    offsets = np.cumsum([0] + [mesh.vertices.shape[0] for mesh in meshes[:-1]])
    return TriangleMesh(
        vertices=np.concatenate([mesh.vertices for mesh in meshes]),
        triangles=np.concatenate(
            [mesh.triangles + offset for mesh, offset in zip(meshes, offsets)]
        ),
    )


def validate_partition(regions: Sequence[UniformGridSpec]) -> None:
    """Regions must tile their joint bounding box without overlapping."""
    if not regions:
        raise InvalidPartition("A partition needs at least one region")

    lowers = np.array([region.lower for region in regions], dtype=np.float64)
    uppers = np.array([region.upper for region in regions], dtype=np.float64)
    extent = uppers.max(axis=0) - lowers.min(axis=0)
    tolerance = 1e-9 * float(extent.max())

    for i in range(len(regions)):
        for j in range(i + 1, len(regions)):
            overlap = np.minimum(uppers[i], uppers[j]) - np.maximum(lowers[i], lowers[j])
            if np.all(overlap > tolerance):
                raise InvalidPartition(f"Regions {i} and {j} overlap")

    covered = float(np.prod(uppers - lowers, axis=1).sum())
    total = float(np.prod(extent))
    if abs(covered - total) > 1e-9 * total:
        raise InvalidPartition(
            f"Regions cover volume {covered:.6g} of a {total:.6g} bounding box; they leave gaps"
        )


def extract_regions(
    field: OccupancyField, regions: Sequence[UniformGridSpec], iso: float = 0.5
) -> list[TriangleMesh]:
    """Mesh every region on its own grid, in the given region order."""
    validate_partition(regions)
    return [marching_cubes(field, region, iso) for region in regions]


def mixed_resolution_extract(
    field: OccupancyField, regions: Sequence[UniformGridSpec], iso: float = 0.5
) -> TriangleMesh:
    """Mesh each region at its own resolution; seams between regions stay open."""
    meshes = extract_regions(field, regions, iso)
    logger.debug(f"Mixed-resolution triangle counts per region: {[len(m) for m in meshes]}")
    return concatenate_meshes(meshes)


def estimate_normals(mesh: TriangleMesh, field: OccupancyField, step: float = 1e-4) -> FloatArray:
    """Per-triangle unit normals pointing towards decreasing occupancy."""
    if mesh.is_empty:
        raise EmptyMesh("Cannot estimate normals of an empty mesh")

    a, b, c = np.moveaxis(mesh.corners(), 1, 0)
    normals = np.cross(b - a, c - a)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    gradient = field_gradient(field, (a + b + c) / 3.0, step=step)
    flip = np.einsum("ij,ij->i", normals, gradient) > 0
    normals[flip] *= -1.0
    return normals
