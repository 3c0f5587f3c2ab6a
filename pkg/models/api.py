from pydantic import BaseModel
from typing import List, Optional
import numpy as np

from models.grid import ConfidenceGrid, GridSpec, LabelGrid
from models.scene import SceneParams
from models.settings import ConsistencySettings, MetricSettings


class LabelGridPayload(BaseModel):
    class_layer: List[List[int]]
    lane_id_layer: Optional[List[List[int]]] = None
    occlusion_layer: Optional[List[List[bool]]] = None

    def to_grid(self, spec: GridSpec) -> LabelGrid:
        classes = np.array(self.class_layer, dtype=np.uint8)
        return LabelGrid(
            spec=spec,
            class_layer=classes,
            lane_id_layer=self.lane_id_layer if self.lane_id_layer is not None else np.zeros(classes.shape),
            occlusion_layer=self.occlusion_layer if self.occlusion_layer is not None else np.zeros(classes.shape),
        )


class ConfidencePayload(BaseModel):
    channels: List[str]
    probs: List[List[List[float]]]
    lane_id_layer: Optional[List[List[int]]] = None

    def to_grid(self, spec: GridSpec) -> ConfidenceGrid:
        return ConfidenceGrid(spec=spec, probs=self.probs, channels=self.channels, lane_id_layer=self.lane_id_layer)


class EvalFrame(BaseModel):
    prediction: ConfidencePayload
    ground_truth: LabelGridPayload


class EvalRequest(BaseModel):
    grid: GridSpec = GridSpec()
    frames: List[EvalFrame]
    metrics: MetricSettings = MetricSettings()
    method: str = "prediction"


class ConsistencyRequest(BaseModel):
    grid: GridSpec = GridSpec()
    predictions: List[ConfidencePayload]
    ground_truth: Optional[List[LabelGridPayload]] = None
    settings: ConsistencySettings = ConsistencySettings()


class PredictionScoreRequest(BaseModel):
    params: SceneParams = SceneParams(seqlen=1)
    grid: GridSpec = GridSpec()
    noise_level: float = 0.0
    seed: int = 0
    metrics: MetricSettings = MetricSettings()
