# dataio/kitti.py
"""KITTI odometry conventions: pose lists, velodyne .bin clouds, calib.txt."""
from pathlib import Path
from typing import List, Sequence, Tuple, Union
import logging
import numpy as np

from models.geometry import CameraIntrinsics, FrameTag, PointCloud, Pose
from utils.errors import IoError, NonFiniteValue, NonRigid, ParseError, TruncatedFile
from utils.files import write_atomic, write_text

logger = logging.getLogger(__name__)

RIGID_TOLERANCE = 1e-3
POINT_DTYPE = np.dtype("<f4")
POINT_BYTES = 4 * POINT_DTYPE.itemsize

PathLike = Union[str, Path]


def _read_lines(path: PathLike) -> List[str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read().splitlines()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}")


def _parse_floats(fields: Sequence[str], line: int, first_column: int = 1) -> np.ndarray:
    values = []
    for i, field in enumerate(fields):
        try:
            values.append(float(field))
        except ValueError:
            raise ParseError(f"'{field}' is not a number", line=line, column=first_column + i)
    return np.array(values)


def rigid_from_matrix(m: np.ndarray, where: str = "") -> Pose:
    """Pose from a 3x4 matrix, snapping a nearly orthonormal rotation onto SO(3)."""
    r = m[:, :3]
    if not np.all(np.isfinite(m)):
        raise NonFiniteValue(f"{where}non-finite pose entries")
    if np.linalg.det(r) <= 0:
        raise NonRigid(f"{where}rotation has determinant {np.linalg.det(r):.6f}")
    error = np.abs(r.T @ r - np.eye(3)).max()
    if error > RIGID_TOLERANCE:
        raise NonRigid(f"{where}rotation deviates from orthonormal by {error:.2e}")
    u, _, vt = np.linalg.svd(r)
    return Pose(rotation=u @ vt, translation=m[:, 3])


def _format_matrix(pose: Pose) -> str:
    return " ".join(f"{v:.17g}" for v in pose.matrix()[:3, :].ravel())


# ==============================
# POSES
# ==============================
def load_poses(path: PathLike) -> List[Pose]:
    poses = []
    for n, text in enumerate(_read_lines(path), start=1):
        fields = text.split()
        if not fields:
            continue
        if len(fields) != 12:
            raise ParseError(f"{path}: expected 12 values, got {len(fields)}", line=n, column=min(len(fields), 12) + 1)
        m = _parse_floats(fields, n).reshape(3, 4)
        poses.append(rigid_from_matrix(m, where=f"{path}:{n}: "))
    logger.debug(f"Loaded {len(poses)} poses from {path}")
    return poses


def write_poses(path: PathLike, poses: Sequence[Pose]) -> Path:
    return write_text(path, "".join(_format_matrix(p) + "\n" for p in poses))


# ==============================
# CLOUDS
# ==============================
def load_cloud(path: PathLike) -> PointCloud:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}")
    if len(raw) % POINT_BYTES:
        raise TruncatedFile(f"{path}: {len(raw)} bytes is not a multiple of {POINT_BYTES}")
    data = np.frombuffer(raw, dtype=POINT_DTYPE).reshape(-1, 4)
    if not np.all(np.isfinite(data)):
        bad = int(np.argmax(~np.isfinite(data).all(axis=1)))
        raise NonFiniteValue(f"{path}: non-finite value in point {bad}")
    return PointCloud(points=data[:, :3], remission=data[:, 3], frame=FrameTag.SENSOR)


def write_cloud(path: PathLike, cloud: PointCloud) -> Path:
    data = np.concatenate([cloud.points, cloud.remission[:, None]], axis=1).astype(POINT_DTYPE)
    return write_atomic(path, data.tobytes())


# ==============================
# CALIBRATION
# ==============================
def load_calibration(path: PathLike, image_size: Tuple[int, int] = (1242, 375)) -> Tuple[CameraIntrinsics, Pose]:
    """(intrinsics from P2, cam_from_lidar from Tr) of a KITTI odometry calib.txt."""
    entries = {}
    for n, text in enumerate(_read_lines(path), start=1):
        if not text.strip():
            continue
        key, sep, rest = text.partition(":")
        if not sep:
            raise ParseError(f"{path}: expected 'KEY: values'", line=n, column=1)
        fields = rest.split()
        if len(fields) != 12:
            raise ParseError(f"{path}: {key} needs 12 values, got {len(fields)}", line=n, column=len(key) + 2)
        entries[key.strip()] = (n, _parse_floats(fields, n, first_column=2).reshape(3, 4))

    for key in ("P2", "Tr"):
        if key not in entries:
            raise ParseError(f"{path}: missing '{key}:' entry")
    p2 = entries["P2"][1]
    width, height = image_size
    K = CameraIntrinsics(fx=p2[0, 0], fy=p2[1, 1], cx=p2[0, 2], cy=p2[1, 2], width=width, height=height)
    line, tr = entries["Tr"]
    return K, rigid_from_matrix(tr, where=f"{path}:{line}: ")


def write_calibration(path: PathLike, K: CameraIntrinsics, cam_from_lidar: Pose) -> Path:
    p2 = np.array([[K.fx, 0.0, K.cx, 0.0], [0.0, K.fy, K.cy, 0.0], [0.0, 0.0, 1.0, 0.0]])
    lines = [
        "P2: " + " ".join(f"{v:.17g}" for v in p2.ravel()),
        "Tr: " + _format_matrix(cam_from_lidar),
    ]
    return write_text(path, "\n".join(lines) + "\n")
