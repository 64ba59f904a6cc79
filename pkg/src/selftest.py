"""Property checks over synthetic data; ``corrupt`` breaks one fixture on purpose."""

import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from loguru import logger

from src.config import Settings
from src.enums import Frame, ShapeKind, TemplateShape
from src.errors import GeometryError
from src.instance import Box3D, PointCloud, ocs_inverse, ocs_transform
from src.metrics import TemplateLibrary, chamfer, delta_mmd, evaluate, find_frames, mmd
from src.metrics.iou import bev_intersection_area
from src.metrics.report import format_key_values
from src.occupancy import AnalyticField, UniformGridSpec, marching_cubes
from src.pipeline import InstancePipeline
from src.synth import (
    broadside_scene,
    perturb_box,
    render_instance,
    template_cloud,
    write_evaluation_fixture,
)

_CLOUD_POINTS = 1024
NOISE_LEVELS = (0.0, 0.05, 0.1, 0.2)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _brute_chamfer(p: np.ndarray, g: np.ndarray) -> float:
    distances = np.linalg.norm(p[:, None, :] - g[None, :, :], axis=-1)
    return float(distances.min(axis=1).mean() + distances.min(axis=0).mean())


def check_chamfer_oracle(seed: int, corrupt: bool) -> CheckResult:
    rng = np.random.default_rng(seed)
    for trial in range(20):
        p = rng.normal(size=(int(rng.integers(1, 129)), 3))
        g = rng.normal(size=(int(rng.integers(1, 129)), 3))
        fast = chamfer(p, g)
        if corrupt:
            g = g + 1e-3
        expected = _brute_chamfer(p, g)
        if abs(fast - expected) > 1e-12:
            return CheckResult("chamfer-oracle", False, f"pair {trial}: {fast!r} != {expected!r}")
    return CheckResult("chamfer-oracle", True)


def check_ocs_roundtrip(seed: int, corrupt: bool) -> CheckResult:
    rng = np.random.default_rng(seed)
    for trial in range(50):
        h, w, l = rng.uniform(0.5, 5.0, size=3)  # noqa: E741
        x, y, z = rng.uniform(-20.0, 20.0, size=3)
        box = Box3D(x=x, y=y, z=z, h=h, w=w, l=l, yaw=float(rng.uniform(-np.pi, np.pi)))
        cloud = PointCloud(points=rng.normal(size=(64, 3)) * 5.0, frame=Frame.ccs)
        inverse_box = perturb_box(box, 0.1, seed + trial) if corrupt else box
        restored = ocs_inverse(ocs_transform(cloud, box), inverse_box)
        error = float(np.abs(restored.points - cloud.points).max())
        if error > 1e-9:
            return CheckResult("ocs-roundtrip", False, f"box {trial}: error {error:.3g}")
    return CheckResult("ocs-roundtrip", True)


def check_bev_45_degrees(seed: int, corrupt: bool) -> CheckResult:
    square = Box3D(x=0.0, y=0.0, z=10.0, h=1.0, w=1.0, l=1.0, yaw=0.0)
    rotated = Box3D(x=0.0, y=0.0, z=10.0, h=1.0, w=1.0, l=1.0, yaw=np.pi / (6 if corrupt else 4))
    area = bev_intersection_area(square, rotated)
    expected = 2.0 * (np.sqrt(2.0) - 1.0)
    if abs(area - expected) > 1e-6:
        return CheckResult("bev-45-degrees", False, f"area {area:.9f} != {expected:.9f}")
    return CheckResult("bev-45-degrees", True)


def check_delta_mmd_endpoints(seed: int, corrupt: bool) -> CheckResult:
    gate = 0.1 if corrupt else 0.05
    values = (delta_mmd(0.0, gate), delta_mmd(0.05, gate))
    if values != (1.0, 0.0):
        return CheckResult("delta-mmd-endpoints", False, f"got {values}")
    return CheckResult("delta-mmd-endpoints", True)


def _completion_mmds(
    shape: TemplateShape, seed: int, box_noise: float = 0.0
) -> tuple[float, float]:
    """MMD of the normalized partial and of its mirror completion, for a broadside object."""
    scene = broadside_scene(shape, seed=seed)
    rendered = render_instance(scene, 0)
    library = TemplateLibrary.from_clouds(
        [(shape.value, template_cloud(shape, _CLOUD_POINTS, seed))], _CLOUD_POINTS
    )
    box = scene.objects[0].box
    if box_noise > 0:
        box = perturb_box(box, box_noise, seed)
    pipeline = InstancePipeline(rig=scene.rig, e=_CLOUD_POINTS, n_c=_CLOUD_POINTS, seed=seed)
    result = pipeline.run(rendered.mask, box)
    return mmd(result.normalized, library), mmd(result.completed, library)


def check_completion_improves_mmd(seed: int, corrupt: bool) -> CheckResult:
    for shape in TemplateShape:
        partial, completed = _completion_mmds(shape, seed)
        if corrupt:
            completed += 1.0
        if not completed < partial:
            return CheckResult(
                "completion-improves-mmd",
                False,
                f"{shape.value}: completed {completed:.4f} >= partial {partial:.4f}",
            )
    return CheckResult("completion-improves-mmd", True)


def _open_edges(triangles: np.ndarray) -> int:
    edges = np.sort(triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return int(np.count_nonzero(counts != 2))


def check_marching_cubes_sphere(seed: int, corrupt: bool) -> CheckResult:
    radius = 0.4
    spec = UniformGridSpec.cube(0.5, 32)
    mesh = marching_cubes(AnalyticField(kind=ShapeKind.sphere, radius=radius), spec)
    triangles = mesh.triangles[1:] if corrupt else mesh.triangles

    open_edges = _open_edges(triangles)
    if mesh.is_empty or open_edges:
        return CheckResult("marching-cubes-sphere", False, f"{open_edges} non-manifold edges")
    diagonal = float(np.linalg.norm(spec.cell_size))
    radii = np.linalg.norm(mesh.vertices, axis=1)
    if np.abs(radii - radius).max() > 1.5 * diagonal:
        return CheckResult("marching-cubes-sphere", False, "vertex radius off the sphere")
    expected_area = 4.0 * np.pi * radius**2
    if abs(mesh.surface_area() - expected_area) > 0.1 * expected_area:
        return CheckResult(
            "marching-cubes-sphere",
            False,
            f"area {mesh.surface_area():.4f} vs {expected_area:.4f}",
        )
    return CheckResult("marching-cubes-sphere", True)


def _fixture_report(root: Path, settings: Settings, perfect: bool) -> tuple:
    paths = write_evaluation_fixture(root, perfect=perfect)
    sources = find_frames(paths["labels"], paths["predictions"], paths["calib"])
    library = TemplateLibrary.load(paths["templates"], settings.template_points)
    return evaluate(sources, settings, library), sources, library


def check_metric_ceiling(seed: int, corrupt: bool) -> CheckResult:
    settings = Settings.load_settings(seed=seed)
    with tempfile.TemporaryDirectory() as tmp:
        report, _, _ = _fixture_report(Path(tmp), settings, perfect=not corrupt)

    for level, scores in report.categories.items():
        values = [scores.ap_2d, scores.ap_bev, scores.ap_3d, scores.aos, *scores.ap_mmd.values()]
        if any(value != 1.0 for value in values):
            return CheckResult("metric-ceiling", False, f"{level.value}: {values}")
    if report.mmdtp is None or report.mmdtp.overall != 0.0:
        return CheckResult("metric-ceiling", False, "MMDTP of the perfect detector is not 0")
    return CheckResult("metric-ceiling", True)


def check_determinism(seed: int, corrupt: bool) -> CheckResult:
    settings = Settings.load_settings(seed=seed)
    with tempfile.TemporaryDirectory() as tmp:
        report, sources, library = _fixture_report(Path(tmp), settings, perfect=False)
        reference = format_key_values(report, settings)
        for workers in (4, 16):
            other = Settings.load_settings(seed=seed + int(corrupt), workers=workers)
            text = format_key_values(evaluate(sources, other, library), other)
            if text != reference:
                return CheckResult("determinism", False, f"report differs at {workers} workers")
    return CheckResult("determinism", True)


CHECKS: dict[str, Callable[[int, bool], CheckResult]] = {
    "chamfer-oracle": check_chamfer_oracle,
    "ocs-roundtrip": check_ocs_roundtrip,
    "bev-45-degrees": check_bev_45_degrees,
    "delta-mmd-endpoints": check_delta_mmd_endpoints,
    "completion-improves-mmd": check_completion_improves_mmd,
    "marching-cubes-sphere": check_marching_cubes_sphere,
    "metric-ceiling": check_metric_ceiling,
    "determinism": check_determinism,
}


def box_noise_study(seed: int, shape: TemplateShape = TemplateShape.toy_car) -> list[tuple]:
    """(sigma, MMD of the completed cloud) for increasing box translation noise."""
    return [(sigma, _completion_mmds(shape, seed, sigma)[1]) for sigma in NOISE_LEVELS]


def run_selftest(seed: int = 0, corrupt: Optional[str] = None) -> list[CheckResult]:
    if corrupt is not None and corrupt not in CHECKS:
        raise ValueError(f"Unknown check {corrupt!r}; choose from {', '.join(CHECKS)}")

    results = []
    for name, check in CHECKS.items():
        logger.info(f"Running check {name}")
        try:
            results.append(check(seed, name == corrupt))
        except GeometryError as e:
            results.append(CheckResult(name, False, f"{type(e).__name__}: {e}"))
    return results
