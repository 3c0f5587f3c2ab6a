"""Small builders shared by the test modules."""
import numpy as np

from models.geometry import FrameTag, PointCloud
from models.grid import LabelGrid
from models.lanes import PaintedCloud


def make_grid(spec, classes, lane_ids=None, occlusion=None) -> LabelGrid:
    return LabelGrid(
        spec=spec,
        class_layer=np.asarray(classes, dtype=np.uint8),
        lane_id_layer=np.zeros(spec.shape) if lane_ids is None else lane_ids,
        occlusion_layer=np.zeros(spec.shape, dtype=bool) if occlusion is None else occlusion,
    )


def painted(points, labels, remission=None, frame_index=0) -> PaintedCloud:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    remission = np.full(len(points), 0.2) if remission is None else remission
    cloud = PointCloud(points=points, remission=remission, frame=FrameTag.CAMERA)
    return PaintedCloud(cloud=cloud, labels=np.broadcast_to(np.asarray(labels, dtype=np.uint8), (len(points),)), frame_index=frame_index)


def ground_points(lateral, forward, height=1.65) -> np.ndarray:
    """Camera-frame points on the ground plane below the camera."""
    lateral, forward = np.broadcast_arrays(np.asarray(lateral, dtype=np.float64), np.asarray(forward, dtype=np.float64))
    return np.stack([lateral.ravel(), np.full(lateral.size, height), forward.ravel()], axis=1)
