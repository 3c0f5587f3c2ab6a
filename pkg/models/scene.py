from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import List, Optional, Tuple
import numpy as np

from models.geometry import CameraIntrinsics
from utils.errors import InvalidParams


class VehicleBox(BaseModel):
    """Vehicle footprint on the world ground plane (x lateral, z forward)."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    lateral: float
    forward: float
    yaw: float = 0.0
    length: float = 4.0
    width: float = 1.8
    parked: bool = False

    def corners(self) -> np.ndarray:
        """Footprint corners (x, z), counter-clockwise."""
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        half_w, half_l = self.width / 2, self.length / 2
        local = np.array([[-half_w, -half_l], [half_w, -half_l], [half_w, half_l], [-half_w, half_l]])
        # yaw turns forward toward +x, matching Pose.from_yaw
        rot = np.array([[c, s], [-s, c]])
        return local @ rot.T + np.array([self.lateral, self.forward])


class SceneParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lane_widths: List[float] = [3.5, 3.5, 3.5]
    ego_lane: Optional[int] = None
    # Right boundary of the ego lane: x = a0 + a1 z + a2 z^2 + a3 z^3 (world frame)
    boundary_coeffs: Tuple[float, float, float, float] = (1.75, 0.0, 0.0, 0.0)
    road_margin: float = 0.5
    sidewalk_width: float = 2.0
    marker_width: float = 0.15
    vehicles: List[VehicleBox] = []
    seqlen: int = 10
    speed: float = 1.0
    seed: int = Field(0, ge=0)
    point_density: float = 50.0
    point_noise: float = 0.0
    camera_height: float = 1.65
    road_remission: float = 0.2
    marker_remission: float = 0.9
    sidewalk_remission: float = 0.35
    intrinsics: CameraIntrinsics = CameraIntrinsics.kitti()
    prediction_noise: Optional[float] = None

    @model_validator(mode="after")
    def _check_params(self):
        problems = []
        if not self.lane_widths:
            problems.append("at least one lane is required")
        if any(w <= 0 for w in self.lane_widths):
            problems.append("lane widths must be > 0")
        if self.ego_lane is not None and not 0 <= self.ego_lane < len(self.lane_widths):
            problems.append(f"ego_lane {self.ego_lane} out of range")
        if self.seqlen < 1:
            problems.append("seqlen must be >= 1")
        for name in ("road_margin", "sidewalk_width", "marker_width", "speed", "point_noise"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        if self.point_density <= 0 or self.camera_height <= 0:
            problems.append("point_density and camera_height must be > 0")
        if self.prediction_noise is not None and not 0.0 <= self.prediction_noise <= 1.0:
            problems.append("prediction_noise must lie in [0, 1]")
        if problems:
            raise InvalidParams("; ".join(problems))
        return self

    @property
    def ego_index(self) -> int:
        return len(self.lane_widths) // 2 if self.ego_lane is None else self.ego_lane

    def boundary_offsets(self) -> np.ndarray:
        """Offset of every lane boundary (left to right) from the ego right boundary."""
        edges = np.concatenate([[0.0], np.cumsum(self.lane_widths)])
        return edges - edges[self.ego_index + 1]
