"""Composite instance pipeline: visible points, object-frame normalization, completion, encoding."""

from dataclasses import dataclass
from typing import Optional

from loguru import logger

from src.config import Settings
from src.enums import OcsScale
from src.errors import GeometryError
from src.geometry import CameraIntrinsics, StereoRig
from src.hallucinators import MirrorHallucinator, get_hallucinator
from src.instance import (
    Box3D,
    ForegroundMask,
    Hallucinator,
    PointCloud,
    ShapeCode,
    extract_visible,
    ocs_transform,
)


class PassThroughEncoder:
    """Stand-in for a learned shape encoder: the code is the flattened completed cloud."""

    def encode(self, cloud: PointCloud) -> ShapeCode:
        return ShapeCode(values=cloud.real_points.reshape(-1))


@dataclass(frozen=True)
class InstanceResult:
    visible: PointCloud
    normalized: PointCloud
    completed: PointCloud
    code: ShapeCode


class InstancePipeline:
    def __init__(
        self,
        rig: Optional[StereoRig] = None,
        intrinsics: Optional[CameraIntrinsics] = None,
        hallucinator: Optional[Hallucinator] = None,
        encoder: Optional[PassThroughEncoder] = None,
        e: int = 2048,
        n_c: int = 16384,
        ocs_scale: OcsScale = OcsScale.uniform_l,
        seed: int = 0,
    ) -> None:
        self.rig = rig
        self.intrinsics = intrinsics or (rig.left if rig is not None else None)
        self.hallucinator = hallucinator or MirrorHallucinator()
        self.encoder = encoder or PassThroughEncoder()
        self.e = e
        self.n_c = n_c
        self.ocs_scale = ocs_scale
        self.seed = seed

    @classmethod
    def from_settings(
        cls,
        settings: Settings,
        rig: Optional[StereoRig] = None,
        intrinsics: Optional[CameraIntrinsics] = None,
    ) -> "InstancePipeline":
        return cls(
            rig=rig,
            intrinsics=intrinsics,
            hallucinator=get_hallucinator(settings.hallucinator),
            e=settings.foreground_samples,
            n_c=settings.completion_points,
            ocs_scale=settings.ocs_scale,
            seed=settings.seed,
        )

    def complete_cloud(self, cloud: PointCloud, box: Box3D) -> PointCloud:
        """Normalize a camera-frame cloud to the object frame and complete it."""
        normalized = ocs_transform(cloud, box, self.ocs_scale)
        return self.hallucinator.complete(normalized, self.n_c)

    def run(self, mask: ForegroundMask, box: Box3D) -> InstanceResult:
        if self.rig is None or self.intrinsics is None:
            raise GeometryError("Extracting visible points from a mask needs a stereo rig")
        visible = extract_visible(mask, self.rig, self.intrinsics, self.e, self.seed)
        normalized = ocs_transform(visible, box, self.ocs_scale)
        completed = self.hallucinator.complete(normalized, self.n_c)
        logger.debug(
            f"Instance at z={box.z:.2f}: {visible.real_count} visible points, "
            f"{len(completed)} completed points"
        )
        return InstanceResult(
            visible=visible,
            normalized=normalized,
            completed=completed,
            code=self.encoder.encode(completed),
        )
