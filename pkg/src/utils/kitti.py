"""KITTI object labels, predictions and calibration files.

Label lines hold 15 fields, prediction lines a 16th score field:

    type truncated occluded alpha left top right bottom h w l x y z rotation_y [score]

``location`` (x, y, z) is the center of the bottom face in the rectified left camera frame.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.errors import MalformedLine, MalformedMatrix, MissingKey
from src.geometry import CameraIntrinsics, StereoRig
from src.instance import Box3D
from src.utils.file_utils import PathLike, format_float, read_text

DONT_CARE = "DontCare"
_LABEL_FIELDS = 15
_PREDICTION_FIELDS = 16


@dataclass(frozen=True)
class LabelRecord:
    object_class: str
    truncated: float
    occluded: int
    alpha: float
    bbox: tuple[float, float, float, float]
    dimensions: tuple[float, float, float]
    location: tuple[float, float, float]
    rotation_y: float
    score: Optional[float] = None

    @property
    def is_dont_care(self) -> bool:
        return self.object_class == DONT_CARE

    @property
    def bbox_height(self) -> float:
        return self.bbox[3] - self.bbox[1]

    def box3d(self) -> Box3D:
        return Box3D.from_kitti(self.location, self.dimensions, self.rotation_y, self.score)


def _parse_label_line(tokens: list[str], source: str, line: int) -> LabelRecord:
    if len(tokens) not in (_LABEL_FIELDS, _PREDICTION_FIELDS):
        expected = f"{_LABEL_FIELDS} or {_PREDICTION_FIELDS}"
        raise MalformedLine(source, line, f"expected {expected} fields, got {len(tokens)}")
    try:
        occluded = int(tokens[2])
    except ValueError:
        raise MalformedLine(source, line, f"occluded must be an integer, got {tokens[2]!r}")
    try:
        numbers = [float(token) for token in tokens[1:2] + tokens[3:]]
    except ValueError:
        raise MalformedLine(source, line, "non-numeric field")
    if not all(math.isfinite(value) for value in numbers):
        raise MalformedLine(source, line, "non-finite field")

    truncated, alpha, *rest = numbers
    bbox, dimensions, location = tuple(rest[0:4]), tuple(rest[4:7]), tuple(rest[7:10])
    rotation_y = rest[10]
    score = rest[11] if len(tokens) == _PREDICTION_FIELDS else None

    if bbox[2] <= bbox[0] or bbox[3] <= bbox[1]:
        raise MalformedLine(
            source, line, f"2D box must have right > left and bottom > top: {bbox}"
        )
    if tokens[0] != DONT_CARE and any(size <= 0 for size in dimensions):
        raise MalformedLine(source, line, f"dimensions must be positive, got {dimensions}")

    return LabelRecord(
        object_class=tokens[0],
        truncated=truncated,
        occluded=occluded,
        alpha=alpha,
        bbox=bbox,
        dimensions=dimensions,
        location=location,
        rotation_y=rotation_y,
        score=score,
    )


def parse_label_file(text: str, source: str = "<label>") -> list[LabelRecord]:
    """One record per non-empty line, DontCare rows included."""
    return [
        _parse_label_line(raw.split(), source, number)
        for number, raw in enumerate(text.split("\n"), start=1)
        if raw.strip()
    ]


def format_label_line(record: LabelRecord) -> str:
    fields = [
        record.object_class,
        format_float(record.truncated),
        str(record.occluded),
        format_float(record.alpha),
        *(format_float(value) for value in record.bbox),
        *(format_float(value) for value in record.dimensions),
        *(format_float(value) for value in record.location),
        format_float(record.rotation_y),
    ]
    if record.score is not None:
        fields.append(format_float(record.score))
    return " ".join(fields)


def format_label_file(records: list[LabelRecord]) -> str:
    return "".join(format_label_line(record) + "\n" for record in records)


def read_label_file(path: PathLike) -> list[LabelRecord]:
    return parse_label_file(read_text(path), source=str(path))


@dataclass(frozen=True)
class CalibRecord:
    p2: np.ndarray
    p3: np.ndarray

    @property
    def fx(self) -> float:
        return float(self.p2[0, 0])

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_matrix(self.p2[:, :3])

    @property
    def baseline(self) -> float:
        return float((self.p2[0, 3] - self.p3[0, 3]) / self.fx)

    @property
    def rig(self) -> StereoRig:
        return StereoRig(left=self.intrinsics, baseline_m=self.baseline)


def parse_calib_file(text: str, source: str = "<calib>") -> CalibRecord:
    """Read the ``P2:`` and ``P3:`` projection rows; other keys are checked but unused."""
    matrices: dict[str, tuple[int, list[float]]] = {}
    for number, raw in enumerate(text.split("\n"), start=1):
        if not raw.strip():
            continue
        key, sep, values = raw.partition(":")
        key = key.strip()
        if not sep or not key:
            raise MalformedLine(source, number, "expected 'KEY: values'")
        try:
            numbers = [float(token) for token in values.split()]
        except ValueError:
            raise MalformedMatrix(source, key, "non-numeric entry", number)
        matrices[key] = (number, numbers)

    projections = []
    for key in ("P2", "P3"):
        if key not in matrices:
            raise MissingKey(source, key)
        number, numbers = matrices[key]
        if len(numbers) != 12:
            raise MalformedMatrix(source, key, f"expected 12 numbers, got {len(numbers)}", number)
        if not all(math.isfinite(value) for value in numbers):
            raise MalformedMatrix(source, key, "non-finite entry", number)
        projections.append(np.array(numbers, dtype=np.float64).reshape(3, 4))

    p2, p3 = projections
    if p2[0, 0] <= 0 or p2[1, 1] <= 0:
        raise MalformedMatrix(source, "P2", "focal lengths must be positive", matrices["P2"][0])
    calib = CalibRecord(p2=p2, p3=p3)
    if calib.baseline <= 0:
        raise MalformedMatrix(
            source, "P3", f"baseline must be positive, got {calib.baseline:.6g}", matrices["P3"][0]
        )
    return calib


def format_calib_file(calib: CalibRecord) -> str:
    rows = [("P2", calib.p2), ("P3", calib.p3)]
    return "".join(
        f"{key}: " + " ".join(format_float(v) for v in matrix.reshape(-1)) + "\n"
        for key, matrix in rows
    )


def read_calib_file(path: PathLike) -> CalibRecord:
    return parse_calib_file(read_text(path), source=str(path))
