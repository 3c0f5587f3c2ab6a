from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
import numpy as np

from models.grid import GridSpec
from utils.errors import InvalidSpec, ShapeMismatch


class VoxelSpec(BaseModel):
    """Vertical slicing of camera y (down positive) into BEV channels."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    bev: GridSpec = GridSpec()
    channels: int = 10
    y_min: float = -0.4
    y_max: float = 2.0

    @property
    def channel_height(self) -> float:
        return (self.y_max - self.y_min) / self.channels

    def validate_slicing(self) -> None:
        if self.channels < 1:
            raise InvalidSpec(f"channel count must be >= 1, got {self.channels}")
        if not self.channel_height > 0:
            raise InvalidSpec(f"channel height must be positive (y_min={self.y_min}, y_max={self.y_max})")


class VoxelVolume(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spec: VoxelSpec
    counts: np.ndarray
    mean_remission: np.ndarray

    @field_validator("counts", mode="before")
    @classmethod
    def _coerce_counts(cls, v):
        a = np.array(v, dtype=np.int64, copy=True)
        a.setflags(write=False)
        return a

    @field_validator("mean_remission", mode="before")
    @classmethod
    def _coerce_remission(cls, v):
        a = np.array(v, dtype=np.float64, copy=True)
        a.setflags(write=False)
        return a

    @model_validator(mode="after")
    def _check_volume(self):
        expected = (self.spec.channels,) + self.spec.bev.shape
        if self.counts.shape != expected or self.mean_remission.shape != expected:
            raise ShapeMismatch(f"volume layers must have shape {expected}")
        if self.counts.min(initial=0) < 0:
            raise InvalidSpec("voxel counts must be nonnegative")
        if np.any((self.mean_remission != 0) & (self.counts == 0)):
            raise InvalidSpec("mean remission must be 0 in empty voxels")
        return self

    @property
    def total_count(self) -> int:
        return int(self.counts.sum())
