import numpy as np
import pytest

from src.config import Settings
from src.enums import Difficulty
from src.geometry import CameraIntrinsics, StereoRig
from src.instance import Box3D
from src.metrics.difficulty import Detection, GroundTruthObject
from src.synth import write_evaluation_fixture


@pytest.fixture
def intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=721.5377, fy=721.5377, cx=609.5593, cy=172.854)


@pytest.fixture
def rig(intrinsics) -> StereoRig:
    return StereoRig(left=intrinsics, baseline_m=0.54)


@pytest.fixture
def settings() -> Settings:
    return Settings.load_settings()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def fixture_paths(tmp_path):
    return write_evaluation_fixture(tmp_path / "fixture")


@pytest.fixture
def perfect_fixture_paths(tmp_path):
    return write_evaluation_fixture(tmp_path / "perfect", perfect=True)


def make_box(x=0.0, y=0.0, z=10.0, h=1.5, w=1.6, l=4.0, yaw=0.0, score=None) -> Box3D:  # noqa: E741
    return Box3D(x=x, y=y, z=z, h=h, w=w, l=l, yaw=yaw, score=score)


def make_gt(
    bbox=(100.0, 100.0, 200.0, 170.0),
    box=None,
    difficulty=Difficulty.easy,
    object_class="Car",
) -> GroundTruthObject:
    return GroundTruthObject(
        object_class=object_class,
        bbox=bbox,
        box=box if box is not None else make_box(),
        truncation=0.0,
        occlusion=0,
        difficulty=difficulty,
    )


def make_det(bbox=(100.0, 100.0, 200.0, 170.0), score=0.9, box=None, cloud=None) -> Detection:
    base = box if box is not None else make_box()
    scored = Box3D(
        x=base.x, y=base.y, z=base.z, h=base.h, w=base.w, l=base.l, yaw=base.yaw, score=score
    )
    return Detection(object_class="Car", bbox=bbox, box=scored, cloud=cloud)
