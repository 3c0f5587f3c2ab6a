from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Dict, List, Optional, Tuple, Union
import logging

from models.geometry import Pose
from models.grid import ConfidenceGrid, LabelGrid
from utils.errors import ShapeMismatch

logger = logging.getLogger(__name__)

Target = Union[ConfidenceGrid, LabelGrid]


class LayoutSequence(BaseModel):
    """Per-frame (static, dynamic) layouts; poses are absolute camera-to-world."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frames: List[Tuple[ConfidenceGrid, ConfidenceGrid]]
    poses: Optional[List[Pose]] = None

    @model_validator(mode="after")
    def _check_frames(self):
        if not self.frames:
            raise ValueError("layout sequence needs at least one frame")
        spec = self.frames[0][0].spec
        for i, (static, dynamic) in enumerate(self.frames):
            if static.spec != spec or dynamic.spec != spec:
                raise ShapeMismatch(f"frame {i} does not share the sequence grid spec")
        if self.poses is not None and len(self.poses) != len(self.frames):
            raise ShapeMismatch(f"{len(self.poses)} poses for {len(self.frames)} frames")
        return self

    def __len__(self) -> int:
        return len(self.frames)

    @staticmethod
    def chain_relative(steps: List[Pose]) -> List[Pose]:
        """Absolute poses from per-step relative motions (first frame at identity)."""
        poses = [Pose.identity()]
        for step in steps:
            poses.append(poses[-1].compose(step))
        return poses


class SupervisedPair(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    static_pred: ConfidenceGrid
    static_target: Target
    dynamic_pred: ConfidenceGrid
    dynamic_target: Target


class ConsistencyWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda_sup: float = Field(1.0, ge=0)
    lambda_short: float = Field(0.1, ge=0)
    lambda_long: float = Field(0.01, ge=0)

    @model_validator(mode="after")
    def _check_ordering(self):
        if not (self.lambda_sup > self.lambda_short > self.lambda_long):
            logger.warning(
                f"⚠️ Consistency weights ({self.lambda_sup}, {self.lambda_short}, {self.lambda_long}) "
                "do not satisfy sup > short > long"
            )
        return self


class ConsistencyReport(BaseModel):
    seqlen: int
    sup: Optional[float] = None
    short: Optional[float] = None
    long: Optional[float] = None
    total: float = 0.0
    short_pairs: int = 0
    long_pairs: int = 0
    warp: bool = False
    weights: ConsistencyWeights = ConsistencyWeights()
    config: Dict = {}
