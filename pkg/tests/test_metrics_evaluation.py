import numpy as np
import pytest

from conftest import make_box, make_det, make_gt
from src.config import Settings
from src.enums import Difficulty, Frame, MatchCriterion
from src.errors import MissingCloud
from src.instance import PointCloud
from src.metrics import (
    TemplateLibrary,
    aos,
    ap_mmd,
    average_precision,
    evaluate,
    find_frames,
    format_key_values,
    format_table,
    mmdtp,
    write_report,
)
from src.synth import FIXTURE_TEMPLATE

EASY, MODERATE, HARD = Difficulty.easy, Difficulty.moderate, Difficulty.hard

# Hand-worked values for the five-frame fixture at IoU 0.7.
EXPECTED_AP = {EASY: 6.0 / 11, MODERATE: 6.75 / 11, HARD: 7.8 / 11}
EXPECTED_AOS = {EASY: 5.0 / 11, MODERATE: 6.0 / 11, HARD: (6.0 + 11.0 / 15.0) / 11}
EXPECTED_AP_MMD = {EASY: 5.2 / 11, MODERATE: 0.5, HARD: (3.0 + 16.0 / 15.0 + 1.62) / 11}
EXPECTED_BINS = [0.0, None, 0.02, 0.04, None, 0.06]


def _report(paths, settings, library=True):
    sources = find_frames(paths["labels"], paths["predictions"], paths["calib"])
    templates = TemplateLibrary.load(paths["templates"], 64) if library else None
    return evaluate(sources, settings, templates)


def _parse_key_values(text: str) -> dict[str, str]:
    pairs = {}
    for line in text.splitlines():
        if line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        pairs[key] = value
    return pairs


def _library() -> TemplateLibrary:
    return TemplateLibrary.from_clouds([("square", FIXTURE_TEMPLATE)], 16)


def _cloud(offset: float = 0.0) -> PointCloud:
    return PointCloud(points=FIXTURE_TEMPLATE + np.array([0.0, offset, 0.0]), frame=Frame.ocs)


class TestFixtureReport:
    def test_detection_ap(self, fixture_paths, settings):
        report = _report(fixture_paths, settings)
        assert report.frames == 5
        for level, expected in EXPECTED_AP.items():
            scores = report.categories[level]
            assert scores.ap_2d == pytest.approx(expected)
            assert scores.ap_bev == pytest.approx(expected)
            assert scores.ap_3d == pytest.approx(expected)

    def test_orientation_and_shape(self, fixture_paths, settings):
        report = _report(fixture_paths, settings)
        for level in EXPECTED_AOS:
            scores = report.categories[level]
            assert scores.aos == pytest.approx(EXPECTED_AOS[level])
            assert scores.ap_mmd[0.7] == pytest.approx(EXPECTED_AP_MMD[level])
            assert scores.ap_mmd[0.5] == pytest.approx(EXPECTED_AP_MMD[level])

    def test_mmdtp(self, fixture_paths, settings):
        result = _report(fixture_paths, settings).mmdtp
        assert result.count == 4
        assert result.overall == pytest.approx(0.03)
        assert [(low, high) for low, high, _ in result.bins] == [
            (0.0, 10.0),
            (10.0, 20.0),
            (20.0, 30.0),
            (30.0, 40.0),
            (40.0, 50.0),
            (50.0, 60.0),
        ]
        for (_, _, value), expected in zip(result.bins, EXPECTED_BINS):
            if expected is None:
                assert value is None
            else:
                assert value == pytest.approx(expected, abs=1e-12)

    def test_curves_hold_eleven_anchors(self, fixture_paths, settings):
        curves = _report(fixture_paths, settings).categories[EASY].curves
        np.testing.assert_allclose(curves["precision_2d"], [1.0] * 4 + [2.0 / 3.0] * 3 + [0.0] * 4)
        assert set(curves) == {"precision_2d", "os", "mmds@0.7", "mmds@0.5"}

    def test_perfect_detector_reaches_ceiling(self, perfect_fixture_paths, settings):
        report = _report(perfect_fixture_paths, settings)
        for scores in report.categories.values():
            assert scores.ap_2d == scores.ap_bev == scores.ap_3d == 1.0
            assert scores.aos == 1.0
            assert scores.ap_mmd == {0.7: 1.0, 0.5: 1.0}
        assert report.mmdtp.overall == 0.0

    def test_without_library_shape_metrics_are_absent(self, fixture_paths, settings):
        report = _report(fixture_paths, settings, library=False)
        assert not report.shape_metrics
        assert report.mmdtp is None
        assert report.categories[EASY].ap_mmd == {}

    def test_empty_prediction_folder(self, fixture_paths, settings, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        sources = find_frames(fixture_paths["labels"], empty)
        report = evaluate(sources, settings, TemplateLibrary.load(fixture_paths["templates"], 64))
        for scores in report.categories.values():
            assert scores.ap_2d == scores.ap_bev == scores.ap_3d == scores.aos == 0.0
        assert report.mmdtp is None

    @pytest.mark.parametrize("workers", [4, 16])
    def test_worker_count_does_not_change_report(self, fixture_paths, settings, workers):
        reference = format_key_values(_report(fixture_paths, settings), settings)
        parallel = Settings.load_settings(workers=workers)
        assert format_key_values(_report(fixture_paths, parallel), parallel) == reference

    def test_missing_cloud(self, fixture_paths, settings):
        (fixture_paths["predictions"] / "clouds" / "000002_0.ply").unlink()
        with pytest.raises(MissingCloud):
            _report(fixture_paths, settings)


class TestReportFiles:
    def test_key_values(self, fixture_paths, settings):
        pairs = _parse_key_values(format_key_values(_report(fixture_paths, settings), settings))
        assert pairs["frames"] == "5"
        assert pairs["shape_metrics"] == "true"
        assert float(pairs["ap_2d.easy"]) == pytest.approx(6.0 / 11, abs=1e-6)
        assert float(pairs["ap_mmd@0.7.moderate"]) == pytest.approx(0.5)
        assert float(pairs["mmdtp@0.5"]) == pytest.approx(0.03)
        assert pairs["mmdtp_count"] == "4"
        assert pairs["mmdtp@0.5.10-20"] == "absent"
        assert pairs["curve.precision_2d.easy"].startswith("[1,1,1,1,0.666667")

    def test_header_carries_settings_but_not_workers(self, fixture_paths):
        settings = Settings.load_settings(workers=3)
        text = format_table(_report(fixture_paths, settings), settings)
        header = [line for line in text.splitlines() if line.startswith("# ")]
        assert "# mmd_gate=0.05" in header
        assert not any(line.startswith("# workers=") for line in header)

    def test_table(self, fixture_paths, settings):
        text = format_table(_report(fixture_paths, settings), settings)
        rows = {line.split()[0]: line.split()[1:] for line in text.splitlines() if line[:1] != "#"}
        assert rows["AP_2D@0.7"] == ["54.55", "61.36", "70.91"]
        assert rows["AOS"] == ["45.45", "54.55", "61.21"]
        assert "MMDTP@0.5: 0.0300 (4 true positives)" in text

    def test_absent_values(self, tmp_path, settings):
        labels = tmp_path / "labels"
        labels.mkdir()
        (labels / "000000.txt").write_text(
            "Van 0 0 0 200 140 300 200 2 1.9 5 -3 1.5 20 0\n", encoding="utf-8"
        )
        report = evaluate(find_frames(labels), settings)
        assert report.categories[EASY].ap_2d is None
        pairs = _parse_key_values(format_key_values(report, settings))
        assert pairs["ap_2d.easy"] == "absent"
        assert "AP_2D@0.7" in format_table(report, settings)

    def test_write_report(self, fixture_paths, settings, tmp_path):
        paths = write_report(tmp_path / "out", _report(fixture_paths, settings), settings)
        assert [path.name for path in paths] == ["report.txt", "metrics.kv"]
        assert all(path.is_file() for path in paths)


class TestSingleFrameMetrics:
    def test_absent_without_counted_ground_truth(self, settings):
        van = make_gt(object_class="Van")
        assert average_precision([make_det()], [van], MatchCriterion.iou_2d, 0.7, settings) is None

    def test_aos_penalizes_flipped_yaw(self, settings):
        gt = make_gt()
        flipped = make_det(box=make_box(yaw=np.pi))
        assert average_precision([flipped], [gt], MatchCriterion.iou_3d, 0.7, settings) == 1.0
        assert aos([flipped], [gt], 0.7, settings) == pytest.approx(0.0, abs=1e-12)

    def test_ap_mmd_gate(self, settings):
        gt = make_gt()
        library = _library()
        close = make_det(cloud=_cloud(0.01))
        far = make_det(cloud=_cloud(0.03))
        assert ap_mmd([close], [gt], 0.7, library, settings) == pytest.approx(0.6)
        assert ap_mmd([far], [gt], 0.7, library, settings) == 0.0

    def test_mmdtp_counts_any_overlapping_ground_truth(self, settings):
        gts = [make_gt(box=make_box(z=10.0)), make_gt(box=make_box(z=15.0))]
        dets = [
            make_det(box=make_box(z=10.0), score=0.9, cloud=_cloud(0.01)),
            make_det(box=make_box(z=10.2), score=0.8, cloud=_cloud(0.02)),
            make_det(box=make_box(z=30.0), score=0.7, cloud=_cloud(0.0)),
        ]
        result = mmdtp(dets, gts, 0.5, _library(), settings.depth_bins, settings)
        assert result.count == 2
        assert result.overall == pytest.approx(0.03)
        assert result.bins[0][2] == pytest.approx(0.02)
        assert result.bins[1][2] == pytest.approx(0.04)

    def test_mmdtp_ignores_detection_order_and_unmatched_detections(self, settings):
        gts = [make_gt(box=make_box(z=10.0)), make_gt(box=make_box(z=15.0))]
        dets = [
            make_det(box=make_box(z=10.0), score=0.9, cloud=_cloud(0.01)),
            make_det(box=make_box(z=15.1), score=0.8, cloud=_cloud(0.03)),
        ]
        stray = make_det(box=make_box(x=20.0, z=25.0), score=0.95, cloud=_cloud(0.04))
        args = (0.5, _library(), settings.depth_bins, settings)
        base = mmdtp(dets, gts, *args)
        shuffled = mmdtp([stray, *reversed(dets)], gts, *args)
        assert shuffled.count == base.count == 2
        assert shuffled.overall == pytest.approx(base.overall, rel=1e-12)
        assert shuffled.bins == base.bins

    def test_missing_detection_cloud(self, settings):
        with pytest.raises(MissingCloud):
            ap_mmd([make_det()], [make_gt()], 0.7, _library(), settings)

    def test_shape_and_orientation_never_exceed_ap(self, settings, rng):
        library = _library()
        for _ in range(100):
            gts, dets = [], []
            for _ in range(int(rng.integers(0, 5))):
                left, top = rng.uniform(0.0, 1000.0), rng.uniform(0.0, 300.0)
                bbox = (left, top, left + rng.uniform(50.0, 150.0), top + rng.uniform(45.0, 90.0))
                box = make_box(x=rng.uniform(-10, 10), z=rng.uniform(5, 50))
                gts.append(make_gt(bbox=bbox, box=box))
                if rng.uniform() < 0.7:
                    jitter = tuple(np.asarray(bbox) + rng.normal(scale=4.0, size=4))
                    noisy = make_box(x=box.x, z=box.z, yaw=rng.uniform(-np.pi, np.pi))
                    dets.append(
                        make_det(jitter, rng.uniform(), noisy, _cloud(rng.uniform(0.0, 0.05)))
                    )
            for _ in range(int(rng.integers(0, 3))):
                left, top = rng.uniform(0.0, 1000.0), rng.uniform(0.0, 300.0)
                dets.append(
                    make_det((left, top, left + 80.0, top + 60.0), rng.uniform(), cloud=_cloud())
                )

            ap = average_precision(dets, gts, MatchCriterion.iou_2d, 0.7, settings)
            if ap is None:
                continue
            assert aos(dets, gts, 0.7, settings) <= ap + 1e-12
            assert ap_mmd(dets, gts, 0.7, library, settings) <= ap + 1e-12
