from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import List, Optional, Tuple
from enum import Enum
import logging

from models.grid import GridSpec
from models.scene import SceneParams
from models.voxel import VoxelSpec

logger = logging.getLogger(__name__)


class MarkerSource(str, Enum):
    SEMANTIC = "semantic"
    REMISSION = "remission"
    BOTH = "both"


class Interpolation(str, Enum):
    ALL_POINT = "all_point"
    ELEVEN_POINT = "eleven_point"


class TieHandling(str, Enum):
    GROUP = "group"
    ORDERED = "ordered"


class WeakSupSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    eps: float = Field(0.5, gt=0)
    min_pts: int = Field(8, ge=1)
    min_span: float = Field(4.0, gt=0)
    min_fit_points: int = Field(4, ge=4)
    z_ref: float = 5.0
    ridge: float = Field(1e-8, ge=0)
    median_window: int = Field(5, ge=1)
    min_lane_width: float = Field(2.5, ge=0)
    marker_source: MarkerSource = MarkerSource.BOTH
    marker_remission: Tuple[float, float] = (0.6, 1.0)
    obstacle_classes: List[str] = ["obstacle"]
    residual_review: float = Field(0.5, gt=0)
    lane_sample_step: float = Field(0.25, gt=0)

    @model_validator(mode="after")
    def _check_remission_range(self):
        lo, hi = self.marker_remission
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError("marker_remission must be an ordered range inside [0, 1]")
        return self


class MetricSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    iou_thresholds: List[float] = [0.5, 0.7]
    binarize_threshold: float = Field(0.5, ge=0, le=1)
    interpolation: Interpolation = Interpolation.ALL_POINT
    tie_handling: TieHandling = TieHandling.GROUP

    @model_validator(mode="after")
    def _check_thresholds(self):
        if not self.iou_thresholds or any(not (0.0 < t < 1.0) for t in self.iou_thresholds):
            raise ValueError("iou_thresholds must be non-empty values in (0, 1)")
        return self


class ConsistencySettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_sup: float = Field(1.0, ge=0)
    lambda_short: float = Field(0.1, ge=0)
    lambda_long: float = Field(0.01, ge=0)
    warp: bool = False
    epsilon: float = Field(1e-7, gt=0, lt=0.5)


class VoxelSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    channels: int = Field(10, ge=1)
    y_min: float = -0.4
    y_max: float = 2.0
    saturation: float = Field(4.0, gt=0)

    @model_validator(mode="after")
    def _check_range(self):
        if not self.y_max > self.y_min:
            raise ValueError("y_max must be greater than y_min")
        return self

    def voxel_spec(self, grid: GridSpec) -> VoxelSpec:
        return VoxelSpec(bev=grid, channels=self.channels, y_min=self.y_min, y_max=self.y_max)


class IoSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    write_png: bool = False
    palette: Optional[str] = None


class ToolConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    grid: GridSpec = GridSpec()
    weaksup: WeakSupSettings = WeakSupSettings()
    metrics: MetricSettings = MetricSettings()
    consistency: ConsistencySettings = ConsistencySettings()
    voxel: VoxelSettings = VoxelSettings()
    synth: SceneParams = SceneParams()
    io: IoSettings = IoSettings()
    seed: int = Field(0, ge=0, lt=2**64)

    def echo(self) -> dict:
        """Effective configuration, JSON-ready."""
        return self.model_dump(mode="json")
