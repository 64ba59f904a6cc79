from pathlib import Path
from typing import Any, Optional, Union

from dotenv import load_dotenv
from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.enums import CdNorm, HallucinatorType, OcsScale
from src.errors import ConfigError

load_dotenv()

# Keys that only affect how the work is scheduled, never its result.
EXECUTION_ONLY_KEYS = frozenset({"workers"})


class Settings(BaseSettings):
    model_config = SettingsConfigDict(case_sensitive=False, extra="forbid")

    voxel_counts: tuple[int, int, int] = Field(
        (304, 20, 288), description="Voxel counts N_x, N_y, N_z of the scene grid."
    )
    voxel_start: tuple[float, float, float] = Field(
        (-30.0, -1.0, 2.0), description="Scene grid start X, Y, Z in meters."
    )
    voxel_resolution: tuple[float, float, float] = Field(
        (0.2, 0.2, 0.2), description="Voxel size along X, Y, Z in meters."
    )
    downsample: int = Field(4, ge=1, description="Feature map and disparity downsampling factor.")

    foreground_samples: int = Field(
        2048, ge=1, description="Number of foreground pixels e sampled per instance."
    )
    completion_points: int = Field(
        16384, ge=1, description="Cardinality N_c of a completed instance cloud."
    )
    ocs_scale: OcsScale = Field(
        OcsScale.uniform_l, description="Object frame scaling: uniform by length or per axis."
    )
    hallucinator: HallucinatorType = Field(
        HallucinatorType.mirror, description="Completion strategy for unseen surfaces."
    )

    iso_level: float = Field(0.5, gt=0, lt=1, description="Occupancy iso level for meshing.")
    field_softness: float = Field(
        0.02, gt=0, description="Boundary width of analytic occupancy fields."
    )

    cd_norm: CdNorm = Field(CdNorm.l2, description="Point distance used by the Chamfer distance.")
    template_points: int = Field(
        2048, ge=1, description="Cardinality every template cloud is resampled to."
    )
    mmd_gate: float = Field(0.05, gt=0, description="MMD above which a detection scores zero.")

    mmdtp_beta: float = Field(0.5, gt=0, lt=1, description="3D IoU threshold for MMDTP.")
    iou_2d_threshold: float = Field(0.7, gt=0, lt=1, description="2D IoU threshold for AP_2D.")
    iou_bev_threshold: float = Field(0.7, gt=0, lt=1, description="BEV IoU threshold for AP_BEV.")
    iou_3d_threshold: float = Field(0.7, gt=0, lt=1, description="3D IoU threshold for AP_3D.")
    ap_mmd_thresholds: tuple[float, ...] = Field(
        (0.7, 0.5), description="2D IoU thresholds AP_MMD is reported at."
    )

    min_height: tuple[float, float, float] = Field(
        (40.0, 25.0, 25.0), description="Minimum 2D box height in pixels for Easy/Moderate/Hard."
    )
    max_occlusion: tuple[int, int, int] = Field(
        (0, 1, 2), description="Maximum occlusion level for Easy/Moderate/Hard."
    )
    max_truncation: tuple[float, float, float] = Field(
        (0.15, 0.30, 0.50), description="Maximum truncation for Easy/Moderate/Hard."
    )
    depth_bins: tuple[float, ...] = Field(
        (0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0),
        description="Edges of the half-open (a, b] depth bins used by MMDTP.",
    )
    evaluated_class: str = Field("Car", description="Class label that is evaluated.")
    neighbor_classes: tuple[str, ...] = Field(
        ("Van",), description="Labels that neither count nor penalize when detected."
    )

    seed: int = Field(0, description="Seed for every sampling step.")
    workers: int = Field(1, ge=1, description="Number of frames evaluated concurrently.")

    @model_validator(mode="after")
    def validate_model(self) -> "Settings":
        if any(count < 1 for count in self.voxel_counts):
            raise ValueError("voxel_counts must all be >= 1")
        if any(step <= 0 for step in self.voxel_resolution):
            raise ValueError("voxel_resolution must all be > 0")

        if not self.ap_mmd_thresholds or any(
            not 0 < threshold < 1 for threshold in self.ap_mmd_thresholds
        ):
            raise ValueError("ap_mmd_thresholds must be non-empty and inside (0, 1)")

        if len(self.depth_bins) < 2 or any(
            high <= low for low, high in zip(self.depth_bins, self.depth_bins[1:])
        ):
            raise ValueError("depth_bins must hold at least two strictly increasing edges")

        if list(self.min_height) != sorted(self.min_height, reverse=True):
            raise ValueError("min_height must not increase from Easy to Hard")
        if list(self.max_occlusion) != sorted(self.max_occlusion):
            raise ValueError("max_occlusion must not decrease from Easy to Hard")
        if list(self.max_truncation) != sorted(self.max_truncation):
            raise ValueError("max_truncation must not decrease from Easy to Hard")

        return self

    @classmethod
    def load_settings(
        cls, config_path: Optional[Union[str, Path]] = None, **overrides: Any
    ) -> "Settings":
        """Build settings from an optional key=value file; non-None overrides win."""
        if config_path is not None and not Path(config_path).is_file():
            raise ConfigError(f"Config file {config_path} does not exist")

        overrides = {key: value for key, value in overrides.items() if value is not None}
        try:
            return cls(_env_file=config_path, **overrides)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration: {e}") from e

    def provenance_lines(self) -> list[str]:
        """Resolved settings as sorted ``key=value`` lines, for report headers."""
        lines = []
        for key, value in sorted(self.model_dump(mode="json").items()):
            if key in EXECUTION_ONLY_KEYS:
                continue
            if isinstance(value, list):
                value = "[" + ",".join(str(item) for item in value) + "]"
            lines.append(f"{key}={value}")
        return lines


SETTINGS = Settings()
