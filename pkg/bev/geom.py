# bev/geom.py
"""Rigid transforms, pinhole projection and depth back-projection."""
from typing import Optional, Tuple
import logging
import numpy as np

from models.geometry import CameraIntrinsics, FrameTag, PointCloud, Pose
from utils.errors import ShapeMismatch

logger = logging.getLogger(__name__)


def transform_points(points: np.ndarray, pose: Pose) -> np.ndarray:
    return pose.apply(points)


def transform_cloud(cloud: PointCloud, pose: Pose, frame: FrameTag = FrameTag.WORLD) -> PointCloud:
    return PointCloud(points=pose.apply(cloud.points), remission=cloud.remission, frame=frame)


# ==============================
# PINHOLE CAMERA
# ==============================
def project_points(points: np.ndarray, K: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection: returns (u, v, visible) for camera-frame points."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    front = z > 0
    safe_z = np.where(front, z, 1.0)
    u = K.fx * x / safe_z + K.cx
    v = K.fy * y / safe_z + K.cy
    visible = front & (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)
    return u, v, visible


def project_pinhole(point, K: CameraIntrinsics) -> Optional[Tuple[float, float]]:
    u, v, visible = project_points(np.asarray(point, dtype=np.float64).reshape(1, 3), K)
    if not visible[0]:
        return None
    return (float(u[0]), float(v[0]))


def backproject_depth(
    depth: np.ndarray,
    K: CameraIntrinsics,
    rgb: Optional[np.ndarray] = None,
    max_channel_value: Optional[float] = None,
) -> PointCloud:
    """One camera-frame point per pixel with positive depth.

    Remission is the mean RGB intensity divided by the format's maximum
    channel value (255 for uint8, 65535 for uint16, 1.0 for floats).
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ShapeMismatch(f"depth map must be 2-D, got {depth.shape}")
    if rgb is not None:
        rgb = np.asarray(rgb)
        if rgb.shape[:2] != depth.shape:
            raise ShapeMismatch(f"rgb {rgb.shape[:2]} and depth {depth.shape} dimensions differ")

    valid = np.isfinite(depth) & (depth > 0)
    v_idx, u_idx = np.nonzero(valid)
    d = depth[v_idx, u_idx]
    x = (u_idx - K.cx) * d / K.fx
    y = (v_idx - K.cy) * d / K.fy
    points = np.stack([x, y, d], axis=1)

    if rgb is None:
        remission = np.ones(d.shape[0])
    else:
        if max_channel_value is None:
            max_channel_value = float(np.iinfo(rgb.dtype).max) if np.issubdtype(rgb.dtype, np.integer) else 1.0
        pixels = rgb[v_idx, u_idx].astype(np.float64)
        if pixels.ndim == 1:
            pixels = pixels[:, None]
        remission = np.clip(pixels[:, :3].mean(axis=1) / max_channel_value, 0.0, 1.0)

    logger.debug(f"Back-projected {d.shape[0]} of {depth.size} pixels")
    return PointCloud(points=points, remission=remission, frame=FrameTag.CAMERA)
