from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional, Tuple, Union
from enum import IntEnum
import numpy as np

from models.geometry import PointCloud
from utils.errors import ShapeMismatch, InvalidSpec


class SegClass(IntEnum):
    """Image-segmentation taxonomy used to paint lidar points (pixel values of label images)."""
    BACKGROUND = 0
    ROAD = 1
    SIDEWALK = 2
    CROSSWALK = 3
    LANE_MARKING = 4
    VEHICLE = 5
    OBSTACLE = 6
    OTHER_ROAD = 7
    UNLABELED = 255


STATIC_SEG_CLASSES = (SegClass.LANE_MARKING, SegClass.CROSSWALK, SegClass.ROAD, SegClass.SIDEWALK, SegClass.OTHER_ROAD)


class PaintedCloud(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    cloud: PointCloud
    labels: np.ndarray
    frame_index: int = 0

    @field_validator("labels", mode="before")
    @classmethod
    def _coerce_labels(cls, v):
        a = np.array(v, dtype=np.uint8, copy=True).reshape(-1)
        a.setflags(write=False)
        return a

    @model_validator(mode="after")
    def _check_lengths(self):
        if self.labels.shape[0] != len(self.cloud):
            raise ShapeMismatch(f"{len(self.cloud)} points but {self.labels.shape[0]} labels")
        return self

    def __len__(self) -> int:
        return len(self.cloud)


class LaneBoundary(BaseModel):
    """lateral = a0 + a1*z + a2*z^2 + a3*z^3 over forward distance z in [z_lo, z_hi]."""
    model_config = ConfigDict(frozen=True)

    coefficients: Tuple[float, float, float, float]
    z_lo: float
    z_hi: float
    cluster_id: int = -1
    residual: float = Field(0.0, ge=0.0)

    @model_validator(mode="after")
    def _check_domain(self):
        if not self.z_hi > self.z_lo:
            raise InvalidSpec(f"boundary domain [{self.z_lo}, {self.z_hi}] is empty")
        return self

    def lateral_at(self, z) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(z, dtype=np.float64), self.coefficients)

    def reference_lateral(self, z_ref: float) -> float:
        """Lateral offset at z_ref, clamped into the fitted domain."""
        return float(self.lateral_at(min(max(z_ref, self.z_lo), self.z_hi)))


class RoadEdge(BaseModel):
    """Polyline of (lateral, forward) vertices sorted by forward distance."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vertices: np.ndarray

    @field_validator("vertices", mode="before")
    @classmethod
    def _coerce_vertices(cls, v):
        a = np.array(v, dtype=np.float64, copy=True).reshape(-1, 2)
        a.setflags(write=False)
        return a

    @property
    def z_lo(self) -> float:
        return float(self.vertices[0, 1])

    @property
    def z_hi(self) -> float:
        return float(self.vertices[-1, 1])

    def lateral_at(self, z) -> np.ndarray:
        """Interpolated lateral offset; NaN outside [z_lo, z_hi]."""
        return np.interp(np.asarray(z, dtype=np.float64), self.vertices[:, 1], self.vertices[:, 0], left=np.nan, right=np.nan)

    def reference_lateral(self, z_ref: float) -> float:
        return float(self.lateral_at(z_ref))


class RoadBounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    left: RoadEdge
    right: RoadEdge


Bound = Union[LaneBoundary, RoadEdge]


class LaneInstance(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lane_id: int = Field(..., ge=1)
    side: int = 0
    left: Optional[Bound] = None
    right: Optional[Bound] = None
    mask: Optional[np.ndarray] = None
    confidence: float = Field(1.0, ge=0.0, le=1.0)

    @field_validator("mask", mode="before")
    @classmethod
    def _coerce_mask(cls, v):
        if v is None:
            return None
        a = np.array(v, dtype=bool, copy=True)
        a.setflags(write=False)
        return a

    @property
    def is_ego(self) -> bool:
        return self.side == 0
