import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.config import Settings
from src.enums import EVALUATED_DIFFICULTIES, Difficulty, Frame, MatchCriterion
from src.errors import MissingCloud
from src.geometry import FloatArray
from src.instance import PointCloud
from src.metrics.chamfer import TemplateLibrary, delta_mmd, mmd
from src.metrics.difficulty import Detection, GroundTruthObject, is_counted, is_neutral
from src.metrics.matching import (
    SweepPartial,
    ap_11,
    interpolated_anchors,
    match_detections,
    merge_partials,
    overlap,
    sweep,
)
from src.utils.file_utils import list_files
from src.utils.kitti import read_calib_file, read_label_file
from src.utils.mesh_io import read_cloud

ORIENTATION = "os"
SHAPE = "mmds"

DetectionSet = Sequence[Detection]
TruthSet = Sequence[GroundTruthObject]


def orientation_similarity(det: Detection, gt: GroundTruthObject) -> float:
    return (1.0 + math.cos(det.box.yaw - gt.box.yaw)) / 2.0


def detection_mmds(
    dets: DetectionSet, library: TemplateLibrary, settings: Settings
) -> FloatArray:
    """MMD of every evaluated-class detection cloud; other classes read 0."""
    values = np.zeros(len(dets))
    for i, det in enumerate(dets):
        if det.object_class != settings.evaluated_class:
            continue
        if det.cloud is None:
            raise MissingCloud(f"Detection {i} ({det.object_class}) has no completed cloud")
        values[i] = mmd(det.cloud, library, settings.cd_norm)
    return values


def category_partial(
    dets: DetectionSet,
    gts: TruthSet,
    category: Difficulty,
    criterion: MatchCriterion,
    threshold: float,
    settings: Settings,
    mmds: Optional[FloatArray] = None,
) -> SweepPartial:
    """Matched, non-ignored detections of one frame for one difficulty category.

    Orientation similarity is always attached; MMD similarity only when ``mmds`` is given.
    """
    kept = [i for i, det in enumerate(dets) if det.object_class == settings.evaluated_class]
    dets = [dets[i] for i in kept]
    counted = [is_counted(gt, category, settings) for gt in gts]
    level = EVALUATED_DIFFICULTIES.index(category)
    result = match_detections(
        dets,
        gts,
        criterion,
        threshold,
        gt_counted=counted,
        gt_neutral=[is_neutral(gt, category, settings) for gt in gts],
        det_ignored=[det.bbox_height < settings.min_height[level] for det in dets],
    )

    active = np.flatnonzero(~result.ignored)
    orientation = np.zeros(active.size)
    shape = np.zeros(active.size)
    for k, i in enumerate(active):
        if not result.tp[i]:
            continue
        gt = gts[result.matched_gt[i]]
        orientation[k] = orientation_similarity(dets[i], gt) if gt.box is not None else 0.0
        if mmds is not None and mmds[kept[i]] <= settings.mmd_gate:
            shape[k] = delta_mmd(float(mmds[kept[i]]), settings.mmd_gate)

    similarities = {ORIENTATION: orientation}
    if mmds is not None:
        similarities[SHAPE] = shape
    return SweepPartial(
        scores=np.array([dets[i].score for i in active], dtype=np.float64),
        tp=result.tp[active],
        n_gt=int(np.count_nonzero(counted)),
        similarities=similarities,
    )


def _average(partials: Sequence[SweepPartial], name: Optional[str] = None) -> Optional[float]:
    merged = merge_partials(partials)
    if merged.n_gt == 0:
        return None
    curve = sweep(merged)
    return ap_11(curve.recall, curve.precision if name is None else curve.similarities[name])


def average_precision(
    dets: DetectionSet,
    gts: TruthSet,
    criterion: MatchCriterion,
    threshold: float,
    settings: Settings,
    category: Difficulty = Difficulty.hard,
) -> Optional[float]:
    """11-point AP of one detection set; absent when no ground truth counts."""
    return _average([category_partial(dets, gts, category, criterion, threshold, settings)])


def aos(
    dets: DetectionSet,
    gts: TruthSet,
    threshold: float,
    settings: Settings,
    category: Difficulty = Difficulty.hard,
) -> Optional[float]:
    partial_ = category_partial(dets, gts, category, MatchCriterion.iou_2d, threshold, settings)
    return _average([partial_], ORIENTATION)


def ap_mmd(
    dets: DetectionSet,
    gts: TruthSet,
    threshold: float,
    library: TemplateLibrary,
    settings: Settings,
    category: Difficulty = Difficulty.hard,
) -> Optional[float]:
    """Recall sweep of gated MMD similarity, averaged over all detections at each rank."""
    mmds = detection_mmds(dets, library, settings)
    partial_ = category_partial(
        dets, gts, category, MatchCriterion.iou_2d, threshold, settings, mmds=mmds
    )
    return _average([partial_], SHAPE)


@dataclass(frozen=True)
class MmdtpPartial:
    total: float
    count: int
    bin_totals: FloatArray
    bin_counts: np.ndarray


@dataclass(frozen=True)
class MmdtpResult:
    overall: Optional[float]
    bins: tuple[tuple[float, float, Optional[float]], ...]
    count: int


def mmdtp_partial(
    dets: DetectionSet,
    gts: TruthSet,
    beta: float,
    mmds: FloatArray,
    depth_bins: Sequence[float],
    settings: Settings,
) -> MmdtpPartial:
    """A detection counts when its 3D IoU with any ground truth of the class exceeds ``beta``."""
    edges = np.asarray(depth_bins, dtype=np.float64)
    total, count = 0.0, 0
    bin_totals = np.zeros(edges.size - 1)
    bin_counts = np.zeros(edges.size - 1, dtype=np.int64)
    truths = [
        gt for gt in gts if gt.object_class == settings.evaluated_class and gt.box is not None
    ]

    for i, det in enumerate(dets):
        if det.object_class != settings.evaluated_class:
            continue
        if not any(overlap(MatchCriterion.iou_3d, det, gt) > beta for gt in truths):
            continue
        total += float(mmds[i])
        count += 1
        # half-open (a, b] bins on predicted depth
        k = int(np.searchsorted(edges, det.box.z, side="left")) - 1
        if 0 <= k < edges.size - 1:
            bin_totals[k] += mmds[i]
            bin_counts[k] += 1

    return MmdtpPartial(total=total, count=count, bin_totals=bin_totals, bin_counts=bin_counts)


def reduce_mmdtp(partials: Sequence[MmdtpPartial], depth_bins: Sequence[float]) -> MmdtpResult:
    edges = list(depth_bins)
    total = sum(p.total for p in partials)
    count = sum(p.count for p in partials)
    bin_totals = np.zeros(len(edges) - 1)
    bin_counts = np.zeros(len(edges) - 1, dtype=np.int64)
    for p in partials:
        bin_totals += p.bin_totals
        bin_counts += p.bin_counts
    return MmdtpResult(
        overall=total / count if count else None,
        bins=tuple(
            (low, high, float(bin_totals[k] / bin_counts[k]) if bin_counts[k] else None)
            for k, (low, high) in enumerate(zip(edges, edges[1:]))
        ),
        count=count,
    )


def mmdtp(
    dets: DetectionSet,
    gts: TruthSet,
    beta: float,
    library: TemplateLibrary,
    depth_bins: Sequence[float],
    settings: Settings,
) -> MmdtpResult:
    """Mean MMD over true positives, overall and per predicted-depth bin; empty bins are absent."""
    mmds = detection_mmds(dets, library, settings)
    return reduce_mmdtp([mmdtp_partial(dets, gts, beta, mmds, depth_bins, settings)], depth_bins)


@dataclass(frozen=True)
class FrameSource:
    stem: str
    label_path: Path
    prediction_path: Optional[Path] = None
    calib_path: Optional[Path] = None
    cloud_dir: Optional[Path] = None


@dataclass(frozen=True)
class FrameData:
    stem: str
    gts: list[GroundTruthObject]
    dets: list[Detection]


@dataclass(frozen=True)
class FramePartial:
    stem: str
    sweeps: dict[tuple[Difficulty, str], SweepPartial]
    mmdtp: Optional[MmdtpPartial] = None


@dataclass(frozen=True)
class CategoryScores:
    ap_2d: Optional[float]
    ap_bev: Optional[float]
    ap_3d: Optional[float]
    aos: Optional[float]
    ap_mmd: dict[float, Optional[float]] = field(default_factory=dict)
    curves: dict[str, FloatArray] = field(default_factory=dict)


@dataclass(frozen=True)
class EvalReport:
    frames: int
    categories: dict[Difficulty, CategoryScores]
    mmdtp: Optional[MmdtpResult]
    shape_metrics: bool


def find_frames(
    label_dir: Path,
    prediction_dir: Optional[Path] = None,
    calib_dir: Optional[Path] = None,
) -> list[FrameSource]:
    """One source per ground-truth label file, in stem order."""
    cloud_dir = None
    if prediction_dir is not None and (prediction_dir / "clouds").is_dir():
        cloud_dir = prediction_dir / "clouds"
    sources = []
    for label_path in list_files(label_dir, (".txt",)):
        stem = label_path.stem
        prediction_path = None
        if prediction_dir is not None and (prediction_dir / f"{stem}.txt").is_file():
            prediction_path = prediction_dir / f"{stem}.txt"
        sources.append(
            FrameSource(
                stem=stem,
                label_path=label_path,
                prediction_path=prediction_path,
                calib_path=calib_dir / f"{stem}.txt" if calib_dir is not None else None,
                cloud_dir=cloud_dir,
            )
        )
    return sources


def load_frame(source: FrameSource, settings: Settings) -> FrameData:
    if source.calib_path is not None:
        calib = read_calib_file(source.calib_path)
        logger.debug(f"Frame {source.stem}: baseline {calib.baseline:.4f} m")

    gts = [
        GroundTruthObject.from_label(record, settings)
        for record in read_label_file(source.label_path)
    ]
    dets: list[Detection] = []
    if source.prediction_path is not None:
        for row, record in enumerate(read_label_file(source.prediction_path)):
            cloud = None
            path = (
                source.cloud_dir / f"{source.stem}_{row}.ply"
                if source.cloud_dir is not None
                else None
            )
            if path is not None and path.is_file():
                cloud = PointCloud(points=read_cloud(path), frame=Frame.ocs)
            dets.append(Detection.from_label(record, cloud))
    return FrameData(stem=source.stem, gts=gts, dets=dets)


def evaluate_frame(
    frame: FrameData, settings: Settings, library: Optional[TemplateLibrary] = None
) -> FramePartial:
    mmds = detection_mmds(frame.dets, library, settings) if library is not None else None

    criteria = [
        ("2d", MatchCriterion.iou_2d, settings.iou_2d_threshold),
        ("bev", MatchCriterion.iou_bev, settings.iou_bev_threshold),
        ("3d", MatchCriterion.iou_3d, settings.iou_3d_threshold),
    ]
    sweeps: dict[tuple[Difficulty, str], SweepPartial] = {}
    for category in EVALUATED_DIFFICULTIES:
        for key, criterion, threshold in criteria:
            sweeps[(category, key)] = category_partial(
                frame.dets, frame.gts, category, criterion, threshold, settings
            )
        if mmds is None:
            continue
        for threshold in settings.ap_mmd_thresholds:
            sweeps[(category, f"mmd@{threshold:g}")] = category_partial(
                frame.dets, frame.gts, category, MatchCriterion.iou_2d, threshold, settings, mmds
            )

    shape = None
    if mmds is not None:
        shape = mmdtp_partial(
            frame.dets, frame.gts, settings.mmdtp_beta, mmds, settings.depth_bins, settings
        )
    logger.debug(f"Frame {frame.stem}: {len(frame.gts)} ground truth, {len(frame.dets)} detections")
    return FramePartial(stem=frame.stem, sweeps=sweeps, mmdtp=shape)


def _load_and_evaluate(
    source: FrameSource, settings: Settings, library: Optional[TemplateLibrary]
) -> FramePartial:
    return evaluate_frame(load_frame(source, settings), settings, library)


def reduce_partials(
    partials: Sequence[FramePartial], settings: Settings, shape_metrics: bool
) -> EvalReport:
    """Merge per-frame partials in stem order."""
    partials = sorted(partials, key=lambda p: p.stem)
    categories = {}
    for category in EVALUATED_DIFFICULTIES:

        def merged(key: str) -> SweepPartial:
            return merge_partials([p.sweeps[(category, key)] for p in partials])

        two_d = merged("2d")
        curves = {}
        ap_2d = aos_value = None
        if two_d.n_gt:
            curve = sweep(two_d)
            curves["precision_2d"] = interpolated_anchors(curve.recall, curve.precision)
            orientation = curve.similarities[ORIENTATION]
            curves[ORIENTATION] = interpolated_anchors(curve.recall, orientation)
            ap_2d = float(curves["precision_2d"].mean())
            aos_value = float(curves[ORIENTATION].mean())

        ap_mmd_values: dict[float, Optional[float]] = {}
        if shape_metrics:
            for threshold in settings.ap_mmd_thresholds:
                shape_sweep = merged(f"mmd@{threshold:g}")
                ap_mmd_values[threshold] = None
                if shape_sweep.n_gt:
                    curve = sweep(shape_sweep)
                    anchors = interpolated_anchors(curve.recall, curve.similarities[SHAPE])
                    curves[f"{SHAPE}@{threshold:g}"] = anchors
                    ap_mmd_values[threshold] = float(anchors.mean())

        categories[category] = CategoryScores(
            ap_2d=ap_2d,
            ap_bev=_average([p.sweeps[(category, "bev")] for p in partials]),
            ap_3d=_average([p.sweeps[(category, "3d")] for p in partials]),
            aos=aos_value,
            ap_mmd=ap_mmd_values,
            curves=curves,
        )

    shape = None
    if shape_metrics:
        shape = reduce_mmdtp(
            [p.mmdtp for p in partials if p.mmdtp is not None], settings.depth_bins
        )
    return EvalReport(
        frames=len(partials), categories=categories, mmdtp=shape, shape_metrics=shape_metrics
    )


def evaluate(
    sources: Sequence[FrameSource],
    settings: Settings,
    library: Optional[TemplateLibrary] = None,
) -> EvalReport:
    """Evaluate every frame with ``settings.workers`` threads.

    Shape metrics need both a template library and a prediction cloud folder.
    """
    shape_metrics = library is not None and any(s.cloud_dir is not None for s in sources)
    if library is not None and not shape_metrics:
        logger.warning("No prediction clouds found; shape metrics are reported absent")
    logger.info(f"Evaluating {len(sources)} frames with {settings.workers} workers")

    evaluate_one = partial(
        _load_and_evaluate, settings=settings, library=library if shape_metrics else None
    )
    with ThreadPoolExecutor(max_workers=settings.workers) as pool:
        partials = list(pool.map(evaluate_one, sources))
    return reduce_partials(partials, settings, shape_metrics)
