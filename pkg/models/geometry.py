from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional
from enum import Enum
import numpy as np

from utils.errors import InvalidPose, InvalidPointCloud, InvalidSpec

ROTATION_TOLERANCE = 1e-6


class FrameTag(str, Enum):
    SENSOR = "sensor"
    CAMERA = "camera"
    WORLD = "world"


class Pose(BaseModel):
    """Rigid transform p -> R @ p + t (sensor frame to target frame)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rotation: np.ndarray
    translation: np.ndarray

    @field_validator("rotation", mode="before")
    @classmethod
    def _coerce_rotation(cls, v):
        r = np.array(v, dtype=np.float64, copy=True)
        if r.shape != (3, 3):
            raise InvalidPose(f"rotation must be 3x3, got {r.shape}")
        r.setflags(write=False)
        return r

    @field_validator("translation", mode="before")
    @classmethod
    def _coerce_translation(cls, v):
        t = np.array(v, dtype=np.float64, copy=True).reshape(-1)
        if t.shape != (3,):
            raise InvalidPose(f"translation must have 3 entries, got {t.shape}")
        t.setflags(write=False)
        return t

    @model_validator(mode="after")
    def _check_rigid(self):
        r = self.rotation
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(self.translation)):
            raise InvalidPose("pose has non-finite entries")
        if np.abs(r.T @ r - np.eye(3)).max() > ROTATION_TOLERANCE or np.linalg.det(r) < 0:
            raise InvalidPose("rotation is not orthonormal with det +1")
        return self

    @classmethod
    def identity(cls) -> "Pose":
        return cls(rotation=np.eye(3), translation=np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix) -> "Pose":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(rotation=m[:3, :3], translation=m[:3, 3])

    @classmethod
    def from_yaw(cls, yaw: float, translation) -> "Pose":
        """Rotation about the camera y (down) axis; yaw > 0 turns forward toward +x."""
        c, s = np.cos(yaw), np.sin(yaw)
        rotation = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        return cls(rotation=rotation, translation=translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: apply other first, then self."""
        return Pose(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rotation=rt, translation=-rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation


class CameraIntrinsics(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    fx: float = Field(..., gt=0)
    fy: float = Field(..., gt=0)
    cx: float
    cy: float
    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)

    @model_validator(mode="after")
    def _check_principal_point(self):
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidSpec(f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image")
        return self

    @classmethod
    def kitti(cls) -> "CameraIntrinsics":
        return cls(fx=721.5377, fy=721.5377, cx=609.5593, cy=172.854, width=1242, height=375)


class PointCloud(BaseModel):
    """N points (x right, y down, z forward in camera frames) with remission in [0, 1]."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    remission: np.ndarray
    frame: FrameTag = FrameTag.SENSOR

    @field_validator("points", mode="before")
    @classmethod
    def _coerce_points(cls, v):
        p = np.array(v, dtype=np.float64, copy=True).reshape(-1, 3)
        p.setflags(write=False)
        return p

    @field_validator("remission", mode="before")
    @classmethod
    def _coerce_remission(cls, v):
        r = np.array(v, dtype=np.float64, copy=True).reshape(-1)
        r.setflags(write=False)
        return r

    @model_validator(mode="after")
    def _check_values(self):
        if self.points.shape[0] != self.remission.shape[0]:
            raise InvalidPointCloud(f"{self.points.shape[0]} points but {self.remission.shape[0]} remission values")
        if not np.all(np.isfinite(self.points)):
            raise InvalidPointCloud("point coordinates must be finite")
        if self.remission.size and (self.remission.min() < 0.0 or self.remission.max() > 1.0 or not np.all(np.isfinite(self.remission))):
            raise InvalidPointCloud("remission must lie in [0, 1]")
        return self

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @classmethod
    def empty(cls, frame: FrameTag = FrameTag.SENSOR) -> "PointCloud":
        return cls(points=np.zeros((0, 3)), remission=np.zeros(0), frame=frame)

    def subset(self, mask) -> "PointCloud":
        return PointCloud(points=self.points[mask], remission=self.remission[mask], frame=self.frame)
