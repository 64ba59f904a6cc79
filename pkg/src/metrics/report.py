from pathlib import Path
from typing import Optional

from loguru import logger

from src.config import Settings
from src.enums import EVALUATED_DIFFICULTIES
from src.metrics.evaluation import EvalReport
from src.utils.file_utils import PathLike, format_float, write_text

TABLE_NAME = "report.txt"
KEY_VALUE_NAME = "metrics.kv"

_LABEL_WIDTH = 18
_COLUMN_WIDTH = 10


def _table_value(value: Optional[float]) -> str:
    return "-" if value is None else f"{100.0 * value:.2f}"


def _kv_value(value: Optional[float]) -> str:
    return "absent" if value is None else format_float(value)


def _header(settings: Settings) -> list[str]:
    return [f"# {line}" for line in settings.provenance_lines()]


def _metric_rows(report: EvalReport, settings: Settings) -> list[tuple[str, str, list]]:
    """(table label, key prefix, per-difficulty values) for each detection metric."""
    scores = [report.categories[level] for level in EVALUATED_DIFFICULTIES]
    rows = [
        (f"AP_2D@{settings.iou_2d_threshold:g}", "ap_2d", [s.ap_2d for s in scores]),
        (f"AP_BEV@{settings.iou_bev_threshold:g}", "ap_bev", [s.ap_bev for s in scores]),
        (f"AP_3D@{settings.iou_3d_threshold:g}", "ap_3d", [s.ap_3d for s in scores]),
        ("AOS", "aos", [s.aos for s in scores]),
    ]
    for threshold in settings.ap_mmd_thresholds:
        rows.append(
            (
                f"AP_MMD@{threshold:g}",
                f"ap_mmd@{threshold:g}",
                [s.ap_mmd.get(threshold) for s in scores],
            )
        )
    return rows


def format_table(report: EvalReport, settings: Settings) -> str:
    """Percentages per difficulty, then MMDTP overall and per depth bin."""
    lines = _header(settings)
    lines.append(f"frames: {report.frames}")
    lines.append(
        "Metric".ljust(_LABEL_WIDTH)
        + "".join(level.value.rjust(_COLUMN_WIDTH) for level in EVALUATED_DIFFICULTIES)
    )
    for label, _, values in _metric_rows(report, settings):
        lines.append(
            label.ljust(_LABEL_WIDTH)
            + "".join(_table_value(value).rjust(_COLUMN_WIDTH) for value in values)
        )

    if report.mmdtp is None:
        lines.append(f"MMDTP@{settings.mmdtp_beta:g}: -")
    else:
        overall = report.mmdtp.overall
        lines.append(
            f"MMDTP@{settings.mmdtp_beta:g}: "
            + ("-" if overall is None else f"{overall:.4f}")
            + f" ({report.mmdtp.count} true positives)"
        )
        for low, high, value in report.mmdtp.bins:
            label = f"  ({low:g}, {high:g}] m"
            lines.append(label.ljust(_LABEL_WIDTH) + ("-" if value is None else f"{value:.4f}"))
    return "".join(line + "\n" for line in lines)


def format_key_values(report: EvalReport, settings: Settings) -> str:
    lines = _header(settings)
    lines.append(f"frames={report.frames}")
    lines.append(f"shape_metrics={'true' if report.shape_metrics else 'false'}")
    for _, key, values in _metric_rows(report, settings):
        for level, value in zip(EVALUATED_DIFFICULTIES, values):
            lines.append(f"{key}.{level.value.lower()}={_kv_value(value)}")

    for level in EVALUATED_DIFFICULTIES:
        for name, anchors in sorted(report.categories[level].curves.items()):
            values = ",".join(format_float(v) for v in anchors)
            lines.append(f"curve.{name}.{level.value.lower()}=[{values}]")

    if report.mmdtp is not None:
        lines.append(f"mmdtp@{settings.mmdtp_beta:g}={_kv_value(report.mmdtp.overall)}")
        lines.append(f"mmdtp_count={report.mmdtp.count}")
        for low, high, value in report.mmdtp.bins:
            lines.append(f"mmdtp@{settings.mmdtp_beta:g}.{low:g}-{high:g}={_kv_value(value)}")
    return "".join(line + "\n" for line in lines)


def write_report(output_dir: PathLike, report: EvalReport, settings: Settings) -> list[Path]:
    paths = [Path(output_dir) / TABLE_NAME, Path(output_dir) / KEY_VALUE_NAME]
    write_text(paths[0], format_table(report, settings))
    write_text(paths[1], format_key_values(report, settings))
    logger.info(f"Report written to {paths[0]} and {paths[1]}")
    return paths
