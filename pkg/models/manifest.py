from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator
from typing import Dict, List, Optional, Tuple
from pathlib import Path

from models.grid import GridSpec

DEFAULT_PALETTE: Dict[str, Tuple[int, int, int]] = {
    "free": (0, 0, 0),
    "road": (128, 64, 128),
    "sidewalk": (244, 35, 232),
    "crosswalk": (255, 255, 255),
    "other_road": (152, 251, 152),
    "vehicle": (0, 0, 142),
    "lane": (250, 170, 30),
}


class FrameRecord(BaseModel):
    """One frame; every path is relative to the manifest directory."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    index: int = Field(..., ge=0)
    timestamp: float
    cloud: Optional[str] = None
    pose_index: Optional[int] = Field(None, ge=0)
    semantic: Optional[str] = None
    depth: Optional[str] = None
    label: Optional[str] = None
    prediction: Optional[str] = None


class SequenceManifest(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sequence_id: str
    frames: List[FrameRecord] = []
    grid: GridSpec = GridSpec()
    palette: Dict[str, Tuple[int, int, int]] = DEFAULT_PALETTE
    poses: Optional[str] = None
    calibration: Optional[str] = None

    _root: Path = PrivateAttr(default=Path("."))

    @model_validator(mode="after")
    def _check_order(self):
        stamps = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValueError("frame timestamps must be strictly increasing")
        return self

    @property
    def root(self) -> Path:
        return self._root

    def with_root(self, root: Path) -> "SequenceManifest":
        self._root = Path(root)
        return self

    def resolve(self, relative: Optional[str]) -> Optional[Path]:
        return None if relative is None else self._root / relative
