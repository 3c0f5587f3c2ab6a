# Domain models: grids, geometry, lanes, voxels, reports, sequences, scenes, manifests, settings
from .grid import GridSpec, LabelGrid, ConfidenceGrid, SemanticClass
from .geometry import Pose, CameraIntrinsics, PointCloud, FrameTag
from .settings import ToolConfig

__all__ = [
    "GridSpec", "LabelGrid", "ConfidenceGrid", "SemanticClass",
    "Pose", "CameraIntrinsics", "PointCloud", "FrameTag",
    "ToolConfig",
]
