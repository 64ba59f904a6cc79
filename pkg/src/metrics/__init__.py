from .chamfer import TemplateLibrary, chamfer, delta_mmd, mmd
from .difficulty import Detection, GroundTruthObject, assign_difficulty
from .evaluation import (
    EvalReport,
    FrameSource,
    MmdtpResult,
    aos,
    ap_mmd,
    average_precision,
    evaluate,
    find_frames,
    mmdtp,
)
from .iou import bev_intersection_area, clip_polygon, iou_2d, iou_3d, iou_bev
from .matching import MatchResult, ap_11, interpolated_anchors, match_detections
from .report import format_key_values, format_table, write_report

__all__ = [
    "Detection",
    "EvalReport",
    "FrameSource",
    "GroundTruthObject",
    "MatchResult",
    "MmdtpResult",
    "TemplateLibrary",
    "aos",
    "ap_11",
    "ap_mmd",
    "assign_difficulty",
    "average_precision",
    "bev_intersection_area",
    "chamfer",
    "clip_polygon",
    "delta_mmd",
    "evaluate",
    "find_frames",
    "format_key_values",
    "format_table",
    "interpolated_anchors",
    "iou_2d",
    "iou_3d",
    "iou_bev",
    "match_detections",
    "mmd",
    "mmdtp",
    "write_report",
]
