"""Chamfer distance and minimal matching distance against a template library."""

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import numpy.typing as npt
from loguru import logger
from scipy.spatial import KDTree

from src.enums import CdNorm
from src.errors import EmptyCloud, EmptyLibrary
from src.geometry import FloatArray
from src.instance import PointCloud, resample_fps
from src.utils.file_utils import PathLike, list_files
from src.utils.mesh_io import read_cloud

CloudLike = Union[PointCloud, npt.ArrayLike]


def _real_points(cloud: CloudLike, name: str) -> FloatArray:
    if isinstance(cloud, PointCloud):
        points = cloud.real_points
    else:
        points = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] == 0:
        raise EmptyCloud(f"{name} has no real points")
    return points


def _directed(tree: KDTree, points: FloatArray, norm: CdNorm) -> float:
    distances, _ = tree.query(points, k=1)
    if norm == CdNorm.squared_l2:
        distances = distances**2
    return float(np.mean(distances))


def chamfer(p: CloudLike, g: CloudLike, norm: CdNorm = CdNorm.l2) -> float:
    """Mean nearest-neighbour distance from P to G plus the same from G to P.

    Padding points are excluded. With the default norm distances are plain Euclidean, not squared.
    """
    p_points = _real_points(p, "P")
    g_points = _real_points(g, "G")
    return _directed(KDTree(g_points), p_points, norm) + _directed(KDTree(p_points), g_points, norm)


@dataclass(frozen=True)
class TemplateLibrary:
    """Canonical object-frame clouds, all resampled to the same cardinality."""

    names: tuple[str, ...]
    clouds: tuple[FloatArray, ...]
    _trees: tuple[KDTree, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.clouds:
            raise EmptyLibrary("Template library is empty")
        if len(self.names) != len(self.clouds):
            raise ValueError("Every template needs exactly one name")
        for name, cloud in zip(self.names, self.clouds):
            if np.asarray(cloud).reshape(-1, 3).shape[0] == 0:
                raise EmptyCloud(f"Template {name} has no points")
        clouds = tuple(np.asarray(cloud, dtype=np.float64).reshape(-1, 3) for cloud in self.clouds)
        object.__setattr__(self, "clouds", clouds)
        object.__setattr__(self, "_trees", tuple(KDTree(cloud) for cloud in clouds))

    @classmethod
    def from_clouds(
        cls, named_clouds: Sequence[tuple[str, CloudLike]], template_points: int = 2048
    ) -> "TemplateLibrary":
        names, clouds = [], []
        for name, cloud in named_clouds:
            points = _real_points(cloud, f"Template {name}")
            names.append(name)
            clouds.append(resample_fps(points, template_points).points)
        return cls(names=tuple(names), clouds=tuple(clouds))

    @classmethod
    def load(cls, directory: PathLike, template_points: int = 2048) -> "TemplateLibrary":
        """Every .ply / .xyz file in ``directory``, in file name order."""
        paths = list_files(directory, (".ply", ".xyz"))
        if not paths:
            raise EmptyLibrary(f"No .ply or .xyz templates in {directory}")
        named = [(path.stem, read_cloud(path)) for path in paths]
        library = cls.from_clouds(named, template_points)
        logger.info(f"Loaded {len(library)} templates from {directory}")
        return library

    def __len__(self) -> int:
        return len(self.clouds)

    def distances(self, cloud: CloudLike, norm: CdNorm = CdNorm.l2) -> FloatArray:
        """Chamfer distance from ``cloud`` to every template, in library order."""
        points = _real_points(cloud, "P")
        own_tree = KDTree(points)
        return np.array(
            [
                _directed(tree, points, norm) + _directed(own_tree, template, norm)
                for tree, template in zip(self._trees, self.clouds)
            ]
        )


def mmd(p: CloudLike, library: TemplateLibrary, norm: CdNorm = CdNorm.l2) -> float:
    """Smallest Chamfer distance between ``p`` and any template."""
    if len(library) == 0:
        raise EmptyLibrary("Template library is empty")
    return float(library.distances(p, norm).min())


def delta_mmd(value: float, gate: float = 0.05) -> float:
    """Linear MMD similarity: 1 at zero distance, 0 at and beyond the gate."""
    return float(np.clip((gate - value) / gate, 0.0, 1.0))
