from enum import Enum


class Frame(str, Enum):
    ccs = "ccs"
    ocs = "ocs"


class OcsScale(str, Enum):
    uniform_l = "uniform-l"
    per_axis = "per-axis"


class CdNorm(str, Enum):
    l2 = "l2"
    squared_l2 = "squared-l2"


class HallucinatorType(str, Enum):
    mirror = "mirror"
    none = "none"


class Difficulty(str, Enum):
    easy = "Easy"
    moderate = "Moderate"
    hard = "Hard"
    ignored = "Ignored"

    @property
    def rank(self) -> int:
        return _DIFFICULTY_RANK[self]


_DIFFICULTY_RANK = {
    Difficulty.easy: 0,
    Difficulty.moderate: 1,
    Difficulty.hard: 2,
    Difficulty.ignored: 3,
}

EVALUATED_DIFFICULTIES = (Difficulty.easy, Difficulty.moderate, Difficulty.hard)


class MatchCriterion(str, Enum):
    iou_2d = "iou2d"
    iou_bev = "iou-bev"
    iou_3d = "iou3d"


class ShapeKind(str, Enum):
    sphere = "sphere"
    axis_box = "axis-box"
    superellipsoid = "superellipsoid"


class TemplateShape(str, Enum):
    sphere = "sphere"
    box_shell = "box-shell"
    toy_car = "toy-car"
