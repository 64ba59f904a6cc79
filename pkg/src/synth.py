"""Deterministic synthetic scenes: template shapes rendered to masks and disparities."""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from dotenv import dotenv_values
from loguru import logger
from pydantic import BaseModel, Field, ValidationError

from src.enums import Frame, OcsScale, TemplateShape
from src.errors import GeometryError, IndexOutOfRange, MalformedFile, UnknownShape
from src.geometry import CameraIntrinsics, FloatArray, StereoRig, depth_to_disparity, project
from src.instance import Box3D, ForegroundMask, PointCloud, ocs_matrix
from src.utils.file_utils import PathLike, write_text
from src.utils.kitti import CalibRecord, format_calib_file
from src.utils.mesh_io import format_ply

# Car-like proportions in the object frame: length 1, height 0.375, width 0.4.
BOX_HALF_EXTENTS = (0.5, 0.1875, 0.2)
SPHERE_RADIUS = 0.5
_BODY_CENTER_Y = 0.075
_BODY_HALF_EXTENTS = (0.5, 0.1125, 0.2)
_CABIN_AXIS_Y = -0.0375
_CABIN_RADIUS = 0.15
_CABIN_HALF_LENGTH = 0.25


@dataclass(frozen=True)
class SynthObject:
    box: Box3D
    shape: TemplateShape


@dataclass(frozen=True)
class SynthScene:
    rig: StereoRig
    objects: tuple[SynthObject, ...]
    seed: int = 0
    render_samples: int = 20000
    background_depth: Optional[float] = None

    def __post_init__(self) -> None:
        for i, obj in enumerate(self.objects):
            if np.any(obj.box.corners()[:, 2] <= 0):
                raise GeometryError(f"Object {i} is not fully in front of the camera")
        if self.render_samples < 1:
            raise GeometryError(f"Render samples must be >= 1, got {self.render_samples}")

    def __len__(self) -> int:
        return len(self.objects)


@dataclass(frozen=True)
class RenderedInstance:
    mask: ForegroundMask
    partial: PointCloud


def _as_shape(shape) -> TemplateShape:
    try:
        return TemplateShape(shape)
    except ValueError:
        raise UnknownShape(f"Unknown template shape {shape!r}")


def _sample_box(
    rng: np.random.Generator, n: int, center: Sequence[float], half: Sequence[float]
) -> tuple[FloatArray, FloatArray]:
    half = np.asarray(half, dtype=np.float64)
    face_areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]]).repeat(2)
    faces = rng.choice(6, size=n, p=face_areas / face_areas.sum())
    axis, sign = faces // 2, np.where(faces % 2 == 0, 1.0, -1.0)

    points = rng.uniform(-1.0, 1.0, size=(n, 3)) * half
    rows = np.arange(n)
    points[rows, axis] = sign * half[axis]
    normals = np.zeros((n, 3))
    normals[rows, axis] = sign
    return points + np.asarray(center, dtype=np.float64), normals


def _sample_cabin(rng: np.random.Generator, n: int) -> tuple[FloatArray, FloatArray]:
    """Half cylinder along x bulging towards -y, with its two half-disc caps."""
    r, half_length = _CABIN_RADIUS, _CABIN_HALF_LENGTH
    areas = np.array([np.pi * r * 2.0 * half_length, np.pi * r * r / 2.0, np.pi * r * r / 2.0])
    part = rng.choice(3, size=n, p=areas / areas.sum())
    phi = rng.uniform(0.0, np.pi, size=n)
    radius = np.where(part == 0, r, r * np.sqrt(rng.uniform(size=n)))

    x = np.where(part == 0, rng.uniform(-half_length, half_length, size=n), 0.0)
    x = np.where(part == 1, half_length, np.where(part == 2, -half_length, x))
    points = np.stack([x, _CABIN_AXIS_Y - radius * np.sin(phi), radius * np.cos(phi)], axis=1)
    normals = np.zeros((n, 3))
    curved = part == 0
    normals[curved, 1] = -np.sin(phi[curved])
    normals[curved, 2] = np.cos(phi[curved])
    normals[part == 1, 0] = 1.0
    normals[part == 2, 0] = -1.0
    return points, normals


def surface_samples(
    shape: TemplateShape, n: int, rng: np.random.Generator
) -> tuple[FloatArray, FloatArray]:
    """Area-uniform surface points with outward unit normals, both (n, 3)."""
    shape = _as_shape(shape)
    if shape == TemplateShape.sphere:
        directions = rng.normal(size=(n, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        return SPHERE_RADIUS * directions, directions

    if shape == TemplateShape.box_shell:
        return _sample_box(rng, n, (0.0, 0.0, 0.0), BOX_HALF_EXTENTS)

    body_extent = 2.0 * np.asarray(_BODY_HALF_EXTENTS)
    body_area = 2.0 * (
        body_extent[0] * body_extent[1]
        + body_extent[0] * body_extent[2]
        + body_extent[1] * body_extent[2]
    )
    cabin_area = np.pi * _CABIN_RADIUS * (2.0 * _CABIN_HALF_LENGTH + _CABIN_RADIUS)
    n_body = int(rng.binomial(n, body_area / (body_area + cabin_area)))
    body = _sample_box(rng, n_body, (0.0, _BODY_CENTER_Y, 0.0), _BODY_HALF_EXTENTS)
    cabin = _sample_cabin(rng, n - n_body)
    return np.concatenate([body[0], cabin[0]]), np.concatenate([body[1], cabin[1]])


def template_cloud(shape: TemplateShape, n: int, seed: int) -> PointCloud:
    if n < 1:
        raise ValueError(f"Template size must be >= 1, got {n}")
    points, _ = surface_samples(_as_shape(shape), n, np.random.default_rng(seed))
    return PointCloud(points=points, frame=Frame.ocs)


def perturb_box(box: Box3D, sigma: float, seed: int) -> Box3D:
    """Gaussian translation noise with standard deviation ``sigma`` meters per axis."""
    dx, dy, dz = np.random.default_rng(seed).normal(0.0, sigma, size=3)
    return Box3D(
        x=box.x + dx,
        y=box.y + dy,
        z=box.z + dz,
        h=box.h,
        w=box.w,
        l=box.l,
        yaw=box.yaw,
        score=box.score,
    )


def render_instance(
    scene: SynthScene, index: int, include_background: bool = False
) -> RenderedInstance:
    """Mask, disparities and the true visible cloud (camera frame) of one object.

    With ``include_background`` every RoI pixel the object does not cover is added as foreground
    at the background plane depth (default: twice the object depth).
    """
    if not 0 <= index < len(scene.objects):
        raise IndexOutOfRange(f"Object index {index} outside 0..{len(scene.objects) - 1}")
    obj = scene.objects[index]
    rng = np.random.default_rng([scene.seed, index])

    local, local_normals = surface_samples(obj.shape, scene.render_samples, rng)
    transform = ocs_matrix(obj.box, OcsScale.uniform_l)
    points = local @ transform[:3, :3].T + transform[:3, 3]
    normals = local_normals @ transform[:3, :3].T
    facing = np.einsum("ij,ij->i", normals, points) < 0
    points = points[facing]

    pixels = np.rint(project(points, scene.rig.left)).astype(np.int64)
    # nearest sample per pixel: sort by depth, keep first occurrence of each pixel
    order = np.lexsort((points[:, 2], pixels[:, 1], pixels[:, 0]))
    keys = pixels[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = np.any(keys[1:] != keys[:-1], axis=1)
    winners = order[first]

    visible = points[winners]
    image_pixels = pixels[winners]
    disparities = np.asarray(depth_to_disparity(visible[:, 2], scene.rig)).reshape(-1)

    origin = image_pixels.min(axis=0)
    size = image_pixels.max(axis=0) - origin + 1
    roi_pixels = (image_pixels - origin).astype(np.float64)

    if include_background:
        depth = scene.background_depth or 2.0 * obj.box.z
        covered = np.zeros((size[1], size[0]), dtype=bool)
        covered[image_pixels[:, 1] - origin[1], image_pixels[:, 0] - origin[0]] = True
        rows, cols = np.nonzero(~covered)
        roi_pixels = np.concatenate([roi_pixels, np.stack([cols, rows], axis=1)])
        disparities = np.concatenate(
            [disparities, np.full(rows.size, depth_to_disparity(depth, scene.rig))]
        )

    logger.debug(
        f"Rendered object {index} ({obj.shape.value}): {winners.size} visible pixels "
        f"in a {size[0]}x{size[1]} RoI"
    )
    mask = ForegroundMask(
        width=int(size[0]),
        height=int(size[1]),
        pixels=roi_pixels,
        disparities=disparities,
        origin=(float(origin[0]), float(origin[1])),
    )
    return RenderedInstance(mask=mask, partial=PointCloud(points=visible, frame=Frame.ccs))


class SceneConfig(BaseModel):
    fx: float = Field(721.5377, gt=0)
    fy: float = Field(721.5377, gt=0)
    cx: float = 609.5593
    cy: float = 172.854
    baseline: float = Field(0.54, gt=0)
    seed: int = 0
    render_samples: int = Field(20000, ge=1)
    background_depth: Optional[float] = Field(None, gt=0)
    objects: list[str] = Field(default_factory=list)


def _parse_object(text: str, source: str, key: str) -> SynthObject:
    tokens = text.split()
    if len(tokens) != 8:
        raise MalformedFile(source, f"{key}: expected 'shape x y z h w l yaw', got {text!r}")
    try:
        x, y, z, h, w, l, yaw = (float(token) for token in tokens[1:])  # noqa: E741
    except ValueError:
        raise MalformedFile(source, f"{key}: non-numeric box parameter in {text!r}")
    return SynthObject(box=Box3D(x=x, y=y, z=z, h=h, w=w, l=l, yaw=yaw), shape=_as_shape(tokens[0]))


def load_scene(path: PathLike) -> SynthScene:
    """Scene from a key=value file; objects are ``object_<i>=shape x y z h w l yaw`` lines."""
    values = dotenv_values(path)
    if not values:
        raise MalformedFile(str(path), "scene file is empty or unreadable")
    object_keys = sorted(
        (key for key in values if key.startswith("object_")),
        key=lambda key: int(key.split("_", 1)[1]) if key.split("_", 1)[1].isdigit() else -1,
    )
    fields = {key: value for key, value in values.items() if not key.startswith("object_")}
    try:
        config = SceneConfig(**fields, objects=[values[key] or "" for key in object_keys])
    except ValidationError as e:
        raise MalformedFile(str(path), f"invalid scene: {e}") from e

    rig = StereoRig(
        left=CameraIntrinsics(fx=config.fx, fy=config.fy, cx=config.cx, cy=config.cy),
        baseline_m=config.baseline,
    )
    objects = tuple(
        _parse_object(text, str(path), key) for key, text in zip(object_keys, config.objects)
    )
    return SynthScene(
        rig=rig,
        objects=objects,
        seed=config.seed,
        render_samples=config.render_samples,
        background_depth=config.background_depth,
    )


def format_scene(scene: SynthScene) -> str:
    left = scene.rig.left
    lines = [
        f"fx={left.fx!r}",
        f"fy={left.fy!r}",
        f"cx={left.cx!r}",
        f"cy={left.cy!r}",
        f"baseline={scene.rig.baseline_m!r}",
        f"seed={scene.seed}",
        f"render_samples={scene.render_samples}",
    ]
    if scene.background_depth is not None:
        lines.append(f"background_depth={scene.background_depth!r}")
    for i, obj in enumerate(scene.objects):
        b = obj.box
        params = " ".join(repr(v) for v in (b.x, b.y, b.z, b.h, b.w, b.l, b.yaw))
        lines.append(f"object_{i}={obj.shape.value} {params}")
    return "".join(line + "\n" for line in lines)


def broadside_scene(
    shape: TemplateShape,
    depth: float = 10.0,
    dimensions: tuple[float, float, float] = (1.5, 1.6, 4.0),
    seed: int = 0,
    rig: Optional[StereoRig] = None,
) -> SynthScene:
    """One object straight ahead at yaw 0, so the camera sees its near lateral side."""
    h, w, l = dimensions  # noqa: E741
    rig = rig or StereoRig(
        left=CameraIntrinsics(fx=721.5377, fy=721.5377, cx=609.5593, cy=172.854), baseline_m=0.54
    )
    box = Box3D(x=0.0, y=0.0, z=depth, h=h, w=w, l=l, yaw=0.0)
    return SynthScene(rig=rig, objects=(SynthObject(box=box, shape=_as_shape(shape)),), seed=seed)


# Evaluation fixture: five frames whose metrics are worked out by hand in the tests.
FIXTURE_STEMS = ("000000", "000001", "000002", "000003", "000004")
FIXTURE_TEMPLATE = np.array(
    [[0.5, 0.0, 0.5], [0.5, 0.0, -0.5], [-0.5, 0.0, 0.5], [-0.5, 0.0, -0.5]], dtype=np.float64
)
_CAR = (1.5, 1.6, 4.0)
_VAN = (2.0, 1.9, 5.0)
FIXTURE_INTRINSICS = CameraIntrinsics(fx=721.5377, fy=721.5377, cx=609.5593, cy=172.854)
FIXTURE_BASELINE = 0.54
_DONT_CARE_ROW = "DontCare -1 -1 -10 700 150 720 160 -1 -1 -1 -1000 -1000 -1000 -10"

# (type, truncated, occluded, bbox, dimensions, location, rotation_y) per frame
_FIXTURE_LABELS = (
    [("Car", 0.0, 0, (100, 100, 200, 170), _CAR, (0.0, 1.5, 10.0), 0.0)],
    [("Car", 0.2, 1, (300, 150, 360, 180), _CAR, (3.0, 1.5, 25.0), 0.3)],
    [("Car", 0.0, 0, (400, 120, 480, 180), _CAR, (-4.0, 1.5, 35.0), 0.0)],
    [("Car", 0.0, 0, (500, 150, 600, 210), _CAR, (5.0, 1.5, 15.0), 0.0)],
    [
        ("Van", 0.0, 0, (200, 140, 300, 200), _VAN, (-3.0, 1.5, 20.0), 0.0),
        ("Car", 0.4, 2, (600, 160, 650, 188), _CAR, (6.0, 1.5, 55.0), -0.2),
    ],
)

# (bbox, dimensions, location, rotation_y, score, cloud offset along y) per frame
_FIXTURE_PREDICTIONS = (
    [((100, 100, 200, 170), _CAR, (0.0, 1.5, 10.0), 0.0, 0.95, 0.0)],
    [((300, 150, 360, 180), _CAR, (3.0, 1.5, 25.0), 0.3, 0.85, 0.01)],
    [((400, 120, 480, 180), _CAR, (-4.0, 1.5, 35.0), np.pi, 0.75, 0.02)],
    [((100, 120, 180, 170), _CAR, (-8.0, 1.5, 45.0), 0.0, 0.9, 0.0)],
    [
        ((200, 140, 300, 200), _VAN, (-3.0, 1.5, 20.0), 0.0, 0.6, 0.0),
        ((600, 160, 650, 188), _CAR, (6.0, 1.5, 55.0), -0.2, 0.5, 0.03),
    ],
)


def _label_line(
    object_class: str,
    truncated: float,
    occluded: int,
    bbox: Sequence[float],
    dimensions: Sequence[float],
    location: Sequence[float],
    rotation_y: float,
    score: Optional[float] = None,
) -> str:
    fields = [object_class, f"{truncated:g}", str(occluded), "0"]
    fields += [f"{v:g}" for v in (*bbox, *dimensions, *location)]
    fields.append(f"{rotation_y:.6g}")
    if score is not None:
        fields.append(f"{score:g}")
    return " ".join(fields)


def write_evaluation_fixture(root: PathLike, perfect: bool = False) -> dict[str, Path]:
    """KITTI-layout fixture with labels, predictions, calibration, clouds and one template.

    With ``perfect`` every non-DontCare label is repeated as a prediction whose cloud equals the
    template.
    """
    root = Path(root)
    paths = {
        "labels": root / "label_2",
        "predictions": root / "pred",
        "calib": root / "calib",
        "templates": root / "templates",
    }
    write_text(paths["templates"] / "square.ply", format_ply(FIXTURE_TEMPLATE))
    left = np.hstack([FIXTURE_INTRINSICS.matrix, np.zeros((3, 1))])
    right = left.copy()
    right[0, 3] = -FIXTURE_INTRINSICS.fx * FIXTURE_BASELINE
    calib = format_calib_file(CalibRecord(p2=left, p3=right))

    for k, stem in enumerate(FIXTURE_STEMS):
        labels = _FIXTURE_LABELS[k]
        rows = [_label_line(*label) for label in labels] + [_DONT_CARE_ROW] * (k == 4)
        write_text(paths["labels"] / f"{stem}.txt", "".join(row + "\n" for row in rows))
        write_text(paths["calib"] / f"{stem}.txt", calib)

        if perfect:
            predictions = [
                (bbox, dims, loc, ry, 1.0 - 0.1 * (k + j / 10.0), 0.0)
                for j, (_, _, _, bbox, dims, loc, ry) in enumerate(labels)
            ]
        else:
            predictions = _FIXTURE_PREDICTIONS[k]
        lines = []
        for row, (bbox, dims, loc, ry, score, offset) in enumerate(predictions):
            lines.append(_label_line("Car", 0.0, 0, bbox, dims, loc, ry, score) + "\n")
            cloud = FIXTURE_TEMPLATE + np.array([0.0, offset, 0.0])
            write_text(paths["predictions"] / "clouds" / f"{stem}_{row}.ply", format_ply(cloud))
        write_text(paths["predictions"] / f"{stem}.txt", "".join(lines))

    logger.info(f"Evaluation fixture with {len(FIXTURE_STEMS)} frames written to {root}")
    return paths
