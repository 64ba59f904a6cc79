import numpy as np
import pytest

from src.errors import IoFailure, MalformedLine, MalformedMatrix, MissingKey
from src.geometry import CameraIntrinsics
from src.utils.kitti import (
    CalibRecord,
    format_calib_file,
    format_label_file,
    parse_calib_file,
    parse_label_file,
    read_calib_file,
    read_label_file,
)

LABEL = "Car 0.20 1 -1.5 300.0 150.0 360.0 180.0 1.5 1.6 4.0 3.0 1.5 25.0 0.3"
PREDICTION = LABEL + " 0.85"
DONT_CARE = "DontCare -1 -1 -10 700 150 720 160 -1 -1 -1 -1000 -1000 -1000 -10"
CALIB = (
    "P0: 721.5 0 609.6 0 0 721.5 172.9 0 0 0 1 0\n"
    "P2: 721.5 0 609.6 44.9 0 721.5 172.9 0.2 0 0 1 0.003\n"
    "P3: 721.5 0 609.6 -344.7 0 721.5 172.9 2.4 0 0 1 0.004\n"
    "R0_rect: 1 0 0 0 1 0 0 0 1\n"
)


class TestLabels:
    def test_fields(self):
        (record,) = parse_label_file(LABEL)
        assert record.object_class == "Car"
        assert record.truncated == pytest.approx(0.2)
        assert record.occluded == 1
        assert record.bbox == (300.0, 150.0, 360.0, 180.0)
        assert record.bbox_height == pytest.approx(30.0)
        assert record.score is None

    def test_box_center_sits_half_a_height_above_location(self):
        box = parse_label_file(PREDICTION)[0].box3d()
        assert (box.x, box.y, box.z) == pytest.approx((3.0, 0.75, 25.0))
        assert box.kitti_location() == pytest.approx((3.0, 1.5, 25.0))
        assert box.score == pytest.approx(0.85)

    def test_dont_care_and_blank_lines(self):
        records = parse_label_file(f"\n{LABEL}\n\n{DONT_CARE}\n")
        assert [r.object_class for r in records] == ["Car", "DontCare"]
        assert records[1].is_dont_care

    def test_format_then_parse(self):
        records = parse_label_file(f"{PREDICTION}\n{DONT_CARE}\n")
        assert parse_label_file(format_label_file(records)) == records

    def test_error_carries_line_number(self):
        with pytest.raises(MalformedLine) as info:
            parse_label_file(f"{LABEL}\n\nCar 0 0 0 1 2 3\n", source="000007.txt")
        assert info.value.line == 3
        assert str(info.value).startswith("000007.txt:3:")

    @pytest.mark.parametrize("bbox", ["100 100 100 170", "100 100 200 100"])
    def test_zero_area_image_box(self, bbox):
        with pytest.raises(MalformedLine) as info:
            parse_label_file(LABEL.replace("300.0 150.0 360.0 180.0", bbox))
        assert info.value.line == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            read_label_file(tmp_path / "missing.txt")


class TestCalib:
    def test_rig(self, tmp_path):
        (tmp_path / "calib.txt").write_text(CALIB, encoding="utf-8")
        calib = read_calib_file(tmp_path / "calib.txt")
        assert calib.fx == pytest.approx(721.5)
        assert calib.baseline == pytest.approx((44.9 + 344.7) / 721.5)
        assert calib.rig.left.cx == pytest.approx(609.6)

    def test_missing_projection(self):
        with pytest.raises(MissingKey) as info:
            parse_calib_file("P2: 1 0 0 0 0 1 0 0 0 0 1 0\n")
        assert info.value.key == "P3"

    def test_short_matrix_reports_line(self):
        text = CALIB.replace("P3: 721.5 0", "P3: 0")
        with pytest.raises(MalformedMatrix) as info:
            parse_calib_file(text)
        assert (info.value.key, info.value.line) == ("P3", 3)

    def test_non_positive_baseline(self):
        text = CALIB.replace("-344.7", "344.7")
        with pytest.raises(MalformedMatrix):
            parse_calib_file(text)

    def test_format_then_parse(self):
        intrinsics = CameraIntrinsics(fx=721.5377, fy=721.5377, cx=609.5593, cy=172.854)
        left = np.hstack([intrinsics.matrix, np.zeros((3, 1))])
        right = left.copy()
        right[0, 3] = -intrinsics.fx * 0.54
        calib = parse_calib_file(format_calib_file(CalibRecord(p2=left, p3=right)))
        assert calib.fx == pytest.approx(721.5377, rel=1e-6)
        assert calib.baseline == pytest.approx(0.54, rel=1e-5)
        assert calib.rig.left.cy == pytest.approx(172.854, rel=1e-6)
