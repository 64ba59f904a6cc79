"""Ground truth and detection records with KITTI-style difficulty levels."""

from dataclasses import dataclass
from typing import Optional

from src.config import Settings
from src.enums import EVALUATED_DIFFICULTIES, Difficulty
from src.instance import Box3D, PointCloud
from src.metrics.iou import BBox2D
from src.utils.kitti import DONT_CARE, LabelRecord


def assign_difficulty(
    bbox_height: float, occlusion: int, truncation: float, settings: Settings
) -> Difficulty:
    """The easiest level whose height, occlusion and truncation limits the object meets."""
    for level, min_height, max_occlusion, max_truncation in zip(
        EVALUATED_DIFFICULTIES,
        settings.min_height,
        settings.max_occlusion,
        settings.max_truncation,
    ):
        if (
            bbox_height >= min_height
            and occlusion <= max_occlusion
            and truncation <= max_truncation
        ):
            return level
    return Difficulty.ignored


@dataclass(frozen=True)
class GroundTruthObject:
    object_class: str
    bbox: BBox2D
    box: Optional[Box3D]
    truncation: float
    occlusion: int
    difficulty: Difficulty

    @classmethod
    def from_label(cls, record: LabelRecord, settings: Settings) -> "GroundTruthObject":
        return cls(
            object_class=record.object_class,
            bbox=record.bbox,
            box=None if record.is_dont_care else record.box3d(),
            truncation=record.truncated,
            occlusion=record.occluded,
            difficulty=assign_difficulty(
                record.bbox_height, record.occluded, record.truncated, settings
            ),
        )

    @property
    def bbox_height(self) -> float:
        return self.bbox[3] - self.bbox[1]


@dataclass(frozen=True)
class Detection:
    """A scored prediction; only the ranking of scores matters, so raw logits work too."""

    object_class: str
    bbox: BBox2D
    box: Box3D
    cloud: Optional[PointCloud] = None

    @classmethod
    def from_label(cls, record: LabelRecord, cloud: Optional[PointCloud] = None) -> "Detection":
        if record.score is None:
            raise ValueError(f"Prediction rows need a score, got a {record.object_class} label row")
        return cls(
            object_class=record.object_class, bbox=record.bbox, box=record.box3d(), cloud=cloud
        )

    @property
    def score(self) -> float:
        return self.box.score if self.box.score is not None else 0.0

    @property
    def bbox_height(self) -> float:
        return self.bbox[3] - self.bbox[1]


def is_counted(gt: GroundTruthObject, category: Difficulty, settings: Settings) -> bool:
    """Whether ``gt`` must be found to reach full recall in ``category``."""
    return (
        gt.object_class == settings.evaluated_class
        and gt.difficulty != Difficulty.ignored
        and gt.difficulty.rank <= category.rank
    )


def is_neutral(gt: GroundTruthObject, category: Difficulty, settings: Settings) -> bool:
    """Ground truth that absorbs detections without counting for or against them."""
    if is_counted(gt, category, settings):
        return False
    return gt.object_class in (settings.evaluated_class, DONT_CARE, *settings.neighbor_classes)
