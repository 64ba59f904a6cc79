from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Union

import numpy as np
import numpy.typing as npt

from src.enums import ShapeKind
from src.errors import GeometryError, MalformedFile, UnknownShape
from src.geometry import FloatArray
from src.utils.tensor_io import read_tensor
from src.voxel import interpolate_grid


class OccupancyField(Protocol):
    def query(self, points: npt.ArrayLike) -> FloatArray: ...


@dataclass(frozen=True)
class UniformGridSpec:
    """Regular lattice of ``counts`` nodes per axis spanning [lower, upper]."""

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]
    counts: tuple[int, int, int]

    def __post_init__(self) -> None:
        if any(n < 2 for n in self.counts):
            raise GeometryError(f"A meshing grid needs >= 2 nodes per axis, got {self.counts}")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise GeometryError(f"Grid bounds are empty: {self.lower} .. {self.upper}")

    @classmethod
    def cube(cls, half_width: float, nodes: int) -> "UniformGridSpec":
        return cls(
            lower=(-half_width,) * 3, upper=(half_width,) * 3, counts=(nodes, nodes, nodes)
        )

    @property
    def cell_size(self) -> FloatArray:
        return (np.array(self.upper) - np.array(self.lower)) / (np.array(self.counts) - 1)

    def axes(self) -> list[FloatArray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.counts)]

    def points(self) -> FloatArray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)


@dataclass(frozen=True)
class SampleGrid:
    """Explicit query locations; not necessarily evenly spaced."""

    points: FloatArray

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if points.shape[0] < 1:
            raise GeometryError("A sample grid needs at least one point")
        if not np.all(np.isfinite(points)):
            raise GeometryError("Sample grid has non-finite points")
        object.__setattr__(self, "points", points)

    @classmethod
    def from_uniform(cls, spec: UniformGridSpec) -> "SampleGrid":
        return cls(points=spec.points().reshape(-1, 3))

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class AnalyticField:
    kind: ShapeKind
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 0.5
    half_extents: tuple[float, float, float] = (0.5, 0.5, 0.5)
    radii: tuple[float, float, float] = (0.5, 0.5, 0.5)
    exponents: tuple[float, float] = (1.0, 1.0)
    softness: float = 0.02

    def __post_init__(self) -> None:
        if self.softness <= 0:
            raise GeometryError(f"Softness must be positive, got {self.softness}")
        if self.kind == ShapeKind.sphere and self.radius <= 0:
            raise GeometryError(f"Sphere radius must be positive, got {self.radius}")
        if self.kind == ShapeKind.axis_box and min(self.half_extents) <= 0:
            raise GeometryError(f"Box half extents must be positive, got {self.half_extents}")
        if self.kind == ShapeKind.superellipsoid and (
            min(self.radii) <= 0 or min(self.exponents) <= 0
        ):
            raise GeometryError("Superellipsoid radii and exponents must be positive")

    @classmethod
    def from_spec(cls, text: str, softness: float = 0.02) -> "AnalyticField":
        """Parse ``kind:key=v[,v...];key=...``, e.g. ``sphere:radius=0.4``."""
        kind_text, _, params_text = text.strip().partition(":")
        try:
            kind = ShapeKind(kind_text.strip())
        except ValueError:
            raise UnknownShape(f"Unknown analytic field kind {kind_text!r}")

        params: dict = {"softness": softness}
        for item in filter(None, (part.strip() for part in params_text.split(";"))):
            key, sep, value = item.partition("=")
            key = key.strip()
            if not sep or key not in _SPEC_KEYS:
                raise MalformedFile("analytic field spec", f"unexpected parameter {item!r}")
            try:
                numbers = tuple(float(v) for v in value.split(","))
            except ValueError:
                raise MalformedFile("analytic field spec", f"non-numeric value in {item!r}")
            size = _SPEC_KEYS[key]
            if len(numbers) != size:
                raise MalformedFile(
                    "analytic field spec", f"{key} takes {size} value(s), got {len(numbers)}"
                )
            params[_SPEC_FIELDS.get(key, key)] = numbers[0] if size == 1 else numbers
        return cls(kind=kind, **params)

    def signed_inside_distance(self, points: npt.ArrayLike) -> FloatArray:
        """Positive inside, negative outside, zero on the surface."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3) - np.asarray(self.center)
        if self.kind == ShapeKind.sphere:
            return self.radius - np.linalg.norm(p, axis=1)

        if self.kind == ShapeKind.axis_box:
            q = np.abs(p) - np.asarray(self.half_extents)
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
            inside = np.minimum(q.max(axis=1), 0.0)
            return -(outside + inside)

        e1, e2 = self.exponents
        a = np.abs(p) / np.asarray(self.radii)
        f = (a[:, 0] ** (2.0 / e2) + a[:, 1] ** (2.0 / e2)) ** (e2 / e1) + a[:, 2] ** (2.0 / e1)
        return (1.0 - f ** (e1 / 2.0)) * min(self.radii)

    def query(self, points: npt.ArrayLike) -> FloatArray:
        d = self.signed_inside_distance(points)
        return 0.5 * (1.0 + np.tanh(d / (2.0 * self.softness)))


_SPEC_KEYS = {"center": 3, "radius": 1, "half": 3, "radii": 3, "exponents": 2}
_SPEC_FIELDS = {"half": "half_extents"}


@dataclass(frozen=True)
class TabulatedField:
    """Confidences on a regular lattice spanning [lower, upper], trilinearly interpolated.

    Points outside the lattice take the value of the nearest boundary location.
    """

    values: FloatArray
    lower: tuple[float, float, float] = (-0.5, -0.5, -0.5)
    upper: tuple[float, float, float] = (0.5, 0.5, 0.5)
    _spacing: FloatArray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 2:
            raise GeometryError(
                f"Tabulated field needs a 3-d lattice >= 2 per axis, got {values.shape}"
            )
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise GeometryError("Tabulated confidences must lie in [0, 1]")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise GeometryError(f"Lattice bounds are empty: {self.lower} .. {self.upper}")
        object.__setattr__(self, "values", values)
        spacing = (np.array(self.upper) - np.array(self.lower)) / (np.array(values.shape) - 1)
        object.__setattr__(self, "_spacing", spacing)

    @classmethod
    def from_tensor(
        cls,
        path: Union[str, Path],
        lower: tuple[float, float, float] = (-0.5, -0.5, -0.5),
        upper: tuple[float, float, float] = (0.5, 0.5, 0.5),
    ) -> "TabulatedField":
        return cls(values=read_tensor(path), lower=lower, upper=upper)

    def query(self, points: npt.ArrayLike) -> FloatArray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        coords = (p - np.asarray(self.lower)) / self._spacing
        return interpolate_grid(self.values, coords, mode="clamp")


def query_field(occupancy: OccupancyField, grid: SampleGrid) -> FloatArray:
    """Confidences at every grid point, order-aligned with the grid."""
    return np.clip(occupancy.query(grid.points), 0.0, 1.0)


def field_gradient(
    occupancy: OccupancyField, points: npt.ArrayLike, step: float = 1e-4
) -> FloatArray:
    """Central-difference gradient of the field at ``points``, shape (N, 3)."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    gradient = np.empty_like(p)
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = step
        gradient[:, axis] = (occupancy.query(p + offset) - occupancy.query(p - offset)) / (
            2.0 * step
        )
    return gradient
