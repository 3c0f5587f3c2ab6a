from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional, Tuple, List
from enum import Enum
import numpy as np

from utils.errors import ShapeMismatch, GridInvariantError


class SemanticClass(str, Enum):
    FREE = "free"
    ROAD = "road"
    SIDEWALK = "sidewalk"
    CROSSWALK = "crosswalk"
    OTHER_ROAD = "other_road"
    VEHICLE = "vehicle"
    LANE = "lane"

    @property
    def code(self) -> int:
        return CLASS_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "SemanticClass":
        return CLASS_ORDER[int(code)]


CLASS_ORDER: List[SemanticClass] = list(SemanticClass)
CLASS_CODES = {cls: idx for idx, cls in enumerate(CLASS_ORDER)}

# Pseudo-class used by single-channel occupancy grids
OCCUPIED = "occupied"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class GridSpec(BaseModel):
    """BEV lattice anchored at the ego camera (bottom-center cell edge).

    Row 0 is the far edge; forward distance grows toward row 0, lateral
    distance grows with the column index.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    rows: int = Field(256, gt=0)
    cols: int = Field(256, gt=0)
    resolution: float = Field(0.15625, gt=0)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def forward_extent(self) -> float:
        return self.rows * self.resolution

    @property
    def lateral_extent(self) -> float:
        return self.cols * self.resolution


class LabelGrid(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spec: GridSpec
    class_layer: np.ndarray
    lane_id_layer: np.ndarray
    occlusion_layer: np.ndarray

    @field_validator("class_layer", mode="before")
    @classmethod
    def _coerce_classes(cls, v):
        return _frozen(np.array(v, dtype=np.uint8, copy=True))

    @field_validator("lane_id_layer", mode="before")
    @classmethod
    def _coerce_lane_ids(cls, v):
        return _frozen(np.array(v, dtype=np.uint16, copy=True))

    @field_validator("occlusion_layer", mode="before")
    @classmethod
    def _coerce_occlusion(cls, v):
        return _frozen(np.array(v, dtype=bool, copy=True))

    @model_validator(mode="after")
    def _check_layers(self):
        for name in ("class_layer", "lane_id_layer", "occlusion_layer"):
            layer = getattr(self, name)
            if layer.shape != self.spec.shape:
                raise ShapeMismatch(f"{name} has shape {layer.shape}, expected {self.spec.shape}")
        if self.class_layer.size and int(self.class_layer.max()) >= len(CLASS_ORDER):
            raise GridInvariantError(f"unknown class code {int(self.class_layer.max())}")
        is_lane = self.class_layer == SemanticClass.LANE.code
        if not np.array_equal(self.lane_id_layer != 0, is_lane):
            raise GridInvariantError("lane ids must be nonzero exactly on lane cells")
        return self

    @classmethod
    def empty(cls, spec: GridSpec) -> "LabelGrid":
        return cls(
            spec=spec,
            class_layer=np.zeros(spec.shape, dtype=np.uint8),
            lane_id_layer=np.zeros(spec.shape, dtype=np.uint16),
            occlusion_layer=np.zeros(spec.shape, dtype=bool),
        )

    def replace(self, **layers) -> "LabelGrid":
        """Build a new grid with some layers swapped (validation runs again)."""
        data = {
            "spec": self.spec,
            "class_layer": self.class_layer,
            "lane_id_layer": self.lane_id_layer,
            "occlusion_layer": self.occlusion_layer,
        }
        data.update(layers)
        return LabelGrid(**data)

    def lane_ids(self) -> List[int]:
        ids = np.unique(self.lane_id_layer)
        return [int(i) for i in ids if i != 0]

    def lane_ids_contiguous(self) -> bool:
        ids = self.lane_ids()
        return ids == list(range(1, len(ids) + 1))


class ConfidenceGrid(BaseModel):
    """Per-cell, per-channel probabilities.

    Channels are SemanticClass values (in any subset/order) or the
    single ``occupied`` pseudo-class.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spec: GridSpec
    probs: np.ndarray
    channels: Tuple[str, ...]
    lane_id_layer: Optional[np.ndarray] = None
    normalized: bool = False

    @field_validator("probs", mode="before")
    @classmethod
    def _coerce_probs(cls, v):
        return _frozen(np.array(v, dtype=np.float64, copy=True))

    @field_validator("lane_id_layer", mode="before")
    @classmethod
    def _coerce_lane_ids(cls, v):
        if v is None:
            return None
        return _frozen(np.array(v, dtype=np.uint16, copy=True))

    @field_validator("channels", mode="before")
    @classmethod
    def _coerce_channels(cls, v):
        names = tuple(c.value if isinstance(c, SemanticClass) else str(c) for c in v)
        allowed = {c.value for c in SemanticClass} | {OCCUPIED}
        unknown = [n for n in names if n not in allowed]
        if unknown:
            raise ValueError(f"unknown channels {unknown}")
        if len(set(names)) != len(names):
            raise ValueError("duplicate channels")
        return names

    @model_validator(mode="after")
    def _check_values(self):
        expected = (len(self.channels),) + self.spec.shape
        if self.probs.shape != expected:
            raise ShapeMismatch(f"probs has shape {self.probs.shape}, expected {expected}")
        if self.lane_id_layer is not None and self.lane_id_layer.shape != self.spec.shape:
            raise ShapeMismatch(f"lane_id_layer has shape {self.lane_id_layer.shape}, expected {self.spec.shape}")
        if not np.all(np.isfinite(self.probs)) or self.probs.min(initial=0.0) < 0.0 or self.probs.max(initial=0.0) > 1.0:
            raise GridInvariantError("probabilities must lie in [0, 1]")
        if self.normalized and not np.allclose(self.probs.sum(axis=0), 1.0, rtol=0.0, atol=1e-6):
            raise GridInvariantError("normalized grid: per-cell probabilities must sum to 1")
        return self

    def channel(self, name) -> np.ndarray:
        if isinstance(name, SemanticClass):
            name = name.value
        try:
            return self.probs[self.channels.index(name)]
        except ValueError:
            raise ShapeMismatch(f"grid has no channel '{name}'")

    def has_channel(self, name) -> bool:
        if isinstance(name, SemanticClass):
            name = name.value
        return name in self.channels

    @classmethod
    def one_hot(cls, grid: LabelGrid) -> "ConfidenceGrid":
        probs = np.zeros((len(CLASS_ORDER),) + grid.spec.shape, dtype=np.float64)
        for code in range(len(CLASS_ORDER)):
            probs[code] = grid.class_layer == code
        return cls(
            spec=grid.spec,
            probs=probs,
            channels=tuple(c.value for c in CLASS_ORDER),
            lane_id_layer=grid.lane_id_layer,
            normalized=True,
        )

    def argmax_classes(self) -> np.ndarray:
        """Class codes of the most probable channel (full class grids only)."""
        codes = np.array([SemanticClass(c).code for c in self.channels], dtype=np.uint8)
        return codes[np.argmax(self.probs, axis=0)]
