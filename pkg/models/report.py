from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import Optional, List, Dict
import numpy as np

from models.lanes import LaneInstance

# Evaluation channels, in report column order
EVAL_CHANNELS = ["vehicle", "road", "sidewalk", "crosswalk", "ego_lane", "lane"]


class PrCurve(BaseModel):
    """Precision/recall pairs along a descending-confidence sweep."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    precision: np.ndarray
    recall: np.ndarray
    thresholds: np.ndarray

    @field_validator("precision", "recall", "thresholds", mode="before")
    @classmethod
    def _coerce(cls, v):
        a = np.array(v, dtype=np.float64, copy=True).reshape(-1)
        a.setflags(write=False)
        return a

    def __len__(self) -> int:
        return self.precision.shape[0]


class FrameError(BaseModel):
    index: int
    error: str


class FrameMetrics(BaseModel):
    """Per-frame metric values; None marks a metric that is undefined for the frame."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    index: int
    iou: Dict[str, Optional[float]] = {}
    ap: Dict[str, Optional[float]] = {}
    occluded_iou: Dict[str, Optional[float]] = {}
    pred_lanes: List[LaneInstance] = []
    gt_lanes: List[LaneInstance] = []


class ClassMetrics(BaseModel):
    iou: Optional[float] = Field(None, ge=0, le=1)
    ap: Optional[float] = Field(None, ge=0, le=1)
    occluded_iou: Optional[float] = Field(None, ge=0, le=1)
    iou_excluded: int = 0
    ap_excluded: int = 0
    occluded_excluded: int = 0


class LaneDetectionMetrics(BaseModel):
    threshold: float
    ap: Optional[float] = Field(None, ge=0, le=1)
    recall: Optional[float] = Field(None, ge=0, le=1)
    predictions: int = 0
    ground_truth: int = 0


class EvalReport(BaseModel):
    method: str = "prediction"
    sequence_id: Optional[str] = None
    frame_count: int = 0
    classes: Dict[str, ClassMetrics] = {}
    miou: Optional[float] = Field(None, ge=0, le=1)
    map: Optional[float] = Field(None, ge=0, le=1)
    occluded_miou: Optional[float] = Field(None, ge=0, le=1)
    lane_detection: List[LaneDetectionMetrics] = []
    frame_errors: List[FrameError] = []
    config: Dict = {}

    def metric(self, channel: str, name: str = "iou") -> Optional[float]:
        cm = self.classes.get(channel)
        return getattr(cm, name) if cm else None

    def lane_metrics(self, threshold: float) -> Optional[LaneDetectionMetrics]:
        for lm in self.lane_detection:
            if abs(lm.threshold - threshold) < 1e-12:
                return lm
        return None
