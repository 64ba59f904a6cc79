"""Greedy detection matching and the 11-point recall sweep."""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt

from src.enums import MatchCriterion
from src.geometry import FloatArray
from src.metrics.difficulty import Detection, GroundTruthObject
from src.metrics.iou import iou_2d, iou_3d, iou_bev

RECALL_ANCHORS = np.linspace(0.0, 1.0, 11)
# Recall reached up to rounding still reaches the anchor.
_RECALL_TOLERANCE = 1e-9


def overlap(criterion: MatchCriterion, det: Detection, gt: GroundTruthObject) -> float:
    if criterion == MatchCriterion.iou_2d:
        return iou_2d(det.bbox, gt.bbox)
    if gt.box is None:
        return 0.0
    if criterion == MatchCriterion.iou_bev:
        return iou_bev(det.box, gt.box)
    return iou_3d(det.box, gt.box)


@dataclass(frozen=True)
class MatchResult:
    tp: np.ndarray
    ignored: np.ndarray
    matched_gt: np.ndarray
    iou: FloatArray
    gt_matched: np.ndarray

    @property
    def fp(self) -> np.ndarray:
        return ~self.tp & ~self.ignored


def _flags(values: Optional[Sequence[bool]], size: int, default: bool) -> np.ndarray:
    if values is None:
        return np.full(size, default, dtype=bool)
    flags = np.asarray(values, dtype=bool)
    if flags.shape != (size,):
        raise ValueError(f"Expected {size} flags, got shape {flags.shape}")
    return flags


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    criterion: MatchCriterion,
    threshold: float,
    gt_counted: Optional[Sequence[bool]] = None,
    gt_neutral: Optional[Sequence[bool]] = None,
    det_ignored: Optional[Sequence[bool]] = None,
) -> MatchResult:
    """Visit detections by descending score; each claims the best free counted gt above threshold.

    Ties in IoU go to the lower gt index and ties in score keep input order. A detection that only
    overlaps neutral ground truth, or that is flagged in ``det_ignored`` and unmatched, is ignored:
    neither a true nor a false positive.
    """
    counted = _flags(gt_counted, len(gts), True)
    neutral = _flags(gt_neutral, len(gts), False) & ~counted
    small = _flags(det_ignored, len(dets), False)

    ious = np.zeros((len(dets), len(gts)), dtype=np.float64)
    for i, det in enumerate(dets):
        for j, gt in enumerate(gts):
            ious[i, j] = overlap(criterion, det, gt)

    tp = np.zeros(len(dets), dtype=bool)
    ignored = np.zeros(len(dets), dtype=bool)
    matched_gt = np.full(len(dets), -1, dtype=np.int64)
    best = ious.max(axis=1) if len(gts) else np.zeros(len(dets))
    gt_matched = np.zeros(len(gts), dtype=bool)

    scores = np.array([det.score for det in dets], dtype=np.float64)
    for i in np.argsort(-scores, kind="stable"):
        above = ious[i] > threshold
        free = counted & ~gt_matched & above
        if np.any(free):
            j = int(np.argmax(np.where(free, ious[i], -1.0)))
            tp[i] = True
            matched_gt[i] = j
            best[i] = ious[i, j]
            gt_matched[j] = True
        elif np.any(neutral & above) or small[i]:
            ignored[i] = True

    return MatchResult(
        tp=tp, ignored=ignored, matched_gt=matched_gt, iou=best, gt_matched=gt_matched
    )


@dataclass(frozen=True)
class SweepPartial:
    """Scored, non-ignored detections of one frame with their per-detection similarities."""

    scores: FloatArray
    tp: np.ndarray
    n_gt: int
    similarities: dict[str, FloatArray] = field(default_factory=dict)

    @classmethod
    def empty(cls, n_gt: int = 0, names: Sequence[str] = ()) -> "SweepPartial":
        return cls(
            scores=np.zeros(0),
            tp=np.zeros(0, dtype=bool),
            n_gt=n_gt,
            similarities={name: np.zeros(0) for name in names},
        )


def merge_partials(partials: Sequence[SweepPartial]) -> SweepPartial:
    """Concatenate in the given order; that order breaks score ties later."""
    if not partials:
        return SweepPartial.empty()
    names = sorted(partials[0].similarities)
    return SweepPartial(
        scores=np.concatenate([p.scores for p in partials]),
        tp=np.concatenate([p.tp for p in partials]),
        n_gt=sum(p.n_gt for p in partials),
        similarities={
            name: np.concatenate([p.similarities[name] for p in partials]) for name in names
        },
    )


@dataclass(frozen=True)
class RecallCurve:
    recall: FloatArray
    precision: FloatArray
    similarities: dict[str, FloatArray]


def sweep(partial: SweepPartial) -> RecallCurve:
    """Precision and mean similarities over the top-k detections, for every k."""
    order = np.argsort(-partial.scores, kind="stable")
    ranks = np.arange(1, order.size + 1, dtype=np.float64)
    true_positives = np.cumsum(partial.tp[order])
    recall = true_positives / partial.n_gt if partial.n_gt else np.zeros(order.size)
    return RecallCurve(
        recall=recall,
        precision=true_positives / ranks,
        similarities={
            name: np.cumsum(values[order]) / ranks for name, values in partial.similarities.items()
        },
    )


def interpolated_anchors(recall: npt.ArrayLike, values: npt.ArrayLike) -> FloatArray:
    """For each anchor r in {0, 0.1, ..., 1}, the max value at recall >= r, or 0 if unreached."""
    recall = np.asarray(recall, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    anchors = np.zeros(RECALL_ANCHORS.size)
    for k, anchor in enumerate(RECALL_ANCHORS):
        reached = recall >= anchor - _RECALL_TOLERANCE
        if np.any(reached):
            anchors[k] = values[reached].max()
    return anchors


def ap_11(recall: npt.ArrayLike, values: npt.ArrayLike) -> float:
    """11-point interpolated average of ``values`` (precision or a similarity) over recall."""
    return float(interpolated_anchors(recall, values).mean())
