# bev/synth.py
"""Parametric synthetic road scenes: ground truth, simulated lidar, poses, occlusion, noisy predictions."""
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
import logging
import numpy as np
from numpy.polynomial import polynomial as P
from pydantic import BaseModel, ConfigDict

from bev.geom import project_points
from bev.raster import cell_centers, rasterize_many
from bev.weaksup import lane_ids_for_sides
from dataio.bevg import write_grid
from dataio.images import write_depth, write_semantic_image
from dataio.kitti import write_calibration, write_cloud, write_poses
from dataio.manifest import save_manifest
from models.geometry import CameraIntrinsics, FrameTag, PointCloud, Pose
from models.grid import CLASS_ORDER, ConfidenceGrid, GridSpec, LabelGrid, SemanticClass
from models.lanes import SegClass
from models.manifest import FrameRecord, SequenceManifest
from models.scene import SceneParams, VehicleBox

logger = logging.getLogger(__name__)

# KITTI-like lidar mounting: lidar x forward, y left, z up
CAM_FROM_LIDAR = Pose(
    rotation=np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]),
    translation=np.array([0.0, -0.08, -0.27]),
)
SAMPLE_STEP = 0.5
# Later classes overwrite earlier ones when splatting into label images
SPLAT_ORDER = [SegClass.LANE_MARKING, SegClass.SIDEWALK, SegClass.ROAD, SegClass.OBSTACLE, SegClass.VEHICLE]


class SceneFrame(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int
    pose: Pose
    grid: LabelGrid
    cloud: PointCloud
    labels: np.ndarray
    occlusion: np.ndarray


# ==============================
# ROAD GEOMETRY
# ==============================
class RoadModel:
    """World-frame curves of a scene: lane boundaries, road edges and the ego centerline."""

    def __init__(self, params: SceneParams):
        self.params = params
        self.coeffs = np.asarray(params.boundary_coeffs, dtype=np.float64)
        self.offsets = params.boundary_offsets()
        ego = params.ego_index
        self.center_offset = 0.5 * (self.offsets[ego] + self.offsets[ego + 1])
        self.road_left = self.offsets[0] - params.road_margin
        self.road_right = self.offsets[-1] + params.road_margin

    def base(self, z) -> np.ndarray:
        return P.polyval(np.asarray(z, dtype=np.float64), self.coeffs)

    def centerline(self, z) -> np.ndarray:
        return self.base(z) + self.center_offset

    def centerline_slope(self, z) -> np.ndarray:
        return P.polyval(np.asarray(z, dtype=np.float64), P.polyder(self.coeffs))

    def ego_poses(self) -> List[Pose]:
        """Camera-to-world poses at arc length i*speed along the centerline."""
        p = self.params
        travel = p.speed * (p.seqlen - 1)
        z = np.arange(0.0, travel * 1.5 + 1.0, 0.01)
        ds = np.hypot(np.diff(self.centerline(z)), np.diff(z))
        arc = np.concatenate([[0.0], np.cumsum(ds)])
        poses = []
        for i in range(p.seqlen):
            zi = float(np.interp(i * p.speed, arc, z))
            yaw = float(np.arctan(self.centerline_slope(zi)))
            poses.append(Pose.from_yaw(yaw, [float(self.centerline(zi)), -p.camera_height, zi]))
        return poses

    def bands(self) -> List[Tuple[float, float, SemanticClass, int]]:
        """(left offset, right offset, class, side) strips across the road, left to right."""
        p = self.params
        out = [
            (self.road_left - p.sidewalk_width, self.road_left, SemanticClass.SIDEWALK, 0),
            (self.road_right, self.road_right + p.sidewalk_width, SemanticClass.SIDEWALK, 0),
            (self.road_left, self.road_right, SemanticClass.ROAD, 0),
        ]
        for k in range(len(p.lane_widths)):
            out.append((self.offsets[k], self.offsets[k + 1], SemanticClass.LANE, k - p.ego_index))
        return out

    def classify(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Segmentation class of ground points at world (x, z)."""
        p = self.params
        rel = x - self.base(z)
        labels = np.full(rel.shape, SegClass.BACKGROUND, dtype=np.uint8)
        labels[(rel >= self.road_left - p.sidewalk_width) & (rel <= self.road_right + p.sidewalk_width)] = SegClass.SIDEWALK
        labels[(rel >= self.road_left) & (rel <= self.road_right)] = SegClass.ROAD
        near = np.min(np.abs(rel[:, None] - self.offsets[None, :]), axis=1)
        labels[near <= p.marker_width / 2] = SegClass.LANE_MARKING
        return labels


def _to_frame(points_xz: np.ndarray, pose: Pose) -> np.ndarray:
    """World ground-plane (x, z) -> frame (lateral, forward)."""
    ground = np.stack([points_xz[:, 0], np.zeros(len(points_xz)), points_xz[:, 1]], axis=1)
    local = pose.inverse().apply(ground)
    return local[:, [0, 2]]


def _inside_convex(px: np.ndarray, pz: np.ndarray, corners: np.ndarray) -> np.ndarray:
    inside = np.ones(px.shape, dtype=bool)
    for a, b in zip(corners, np.roll(corners, -1, axis=0)):
        inside &= (b[0] - a[0]) * (pz - a[1]) - (b[1] - a[1]) * (px - a[0]) >= 0
    return inside


# ==============================
# OCCLUSION
# ==============================
def occlusion_mask(spec: GridSpec, footprints: Sequence[np.ndarray]) -> np.ndarray:
    """Cells whose segment from the ego origin to the cell center crosses a footprint.

    Footprints are convex polygons of (lateral, forward) corners in the grid frame.
    """
    lateral, forward = cell_centers(spec)
    dx, dz = lateral.ravel(), forward.ravel()
    occluded = np.zeros(dx.shape, dtype=bool)
    for corners in footprints:
        corners = np.asarray(corners, dtype=np.float64)
        centroid = corners.mean(axis=0)
        t_lo = np.zeros(dx.shape)
        t_hi = np.ones(dx.shape)
        hit = np.ones(dx.shape, dtype=bool)
        for a, b in zip(corners, np.roll(corners, -1, axis=0)):
            n = np.array([b[1] - a[1], -(b[0] - a[0])])
            if np.dot(n, centroid - a) > 0:
                n = -n
            num = np.dot(n, a)  # n . (a - origin)
            den = n[0] * dx + n[1] * dz
            with np.errstate(divide="ignore", invalid="ignore"):
                t = num / den
            hit &= ~((den == 0) & (num < 0))
            t_hi = np.where(den > 0, np.minimum(t_hi, t), t_hi)
            t_lo = np.where(den < 0, np.maximum(t_lo, t), t_lo)
        occluded |= hit & (t_lo <= t_hi)
    return occluded.reshape(spec.shape)


# ==============================
# GROUND TRUTH
# ==============================
def _band_polygon(road: RoadModel, left: float, right: float, z: np.ndarray, pose: Pose) -> np.ndarray:
    base = road.base(z)
    left_pts = np.stack([base + left, z], axis=1)
    right_pts = np.stack([base + right, z], axis=1)[::-1]
    return _to_frame(np.concatenate([left_pts, right_pts]), pose)


def ground_truth_grid(params: SceneParams, pose: Pose, spec: GridSpec = GridSpec(), road: Optional[RoadModel] = None) -> LabelGrid:
    road = road or RoadModel(params)
    reach = spec.forward_extent + spec.lateral_extent
    z0 = float(pose.translation[2])
    z = np.arange(z0 - reach, z0 + reach + SAMPLE_STEP, SAMPLE_STEP)

    sides = [side for _, _, cls, side in road.bands() if cls == SemanticClass.LANE]
    ids = lane_ids_for_sides(sides)
    items = []
    for left, right, cls, side in road.bands():
        lane_id = ids[side] if cls == SemanticClass.LANE else 0
        items.append((_band_polygon(road, left, right, z, pose), cls, lane_id))
    footprints = [_to_frame(v.corners(), pose) for v in params.vehicles]
    items += [(corners, SemanticClass.VEHICLE, 0) for corners in footprints]

    grid = rasterize_many(LabelGrid.empty(spec), items)
    return grid.replace(occlusion_layer=occlusion_mask(spec, footprints))


# ==============================
# LIDAR
# ==============================
def _sample_ground(road: RoadModel, pose: Pose, spec: GridSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    p = road.params
    z0 = float(pose.translation[2])
    z_lo, z_hi = z0, z0 + spec.forward_extent + 5.0
    left, right = road.road_left - p.sidewalk_width, road.road_right + p.sidewalk_width
    count = rng.poisson(p.point_density * (z_hi - z_lo) * (right - left))
    z = rng.uniform(z_lo, z_hi, count)
    x = road.base(z) + rng.uniform(left, right, count)
    return x, z


def _sample_vehicles(vehicles: Sequence[VehicleBox], density: float, rng: np.random.Generator):
    xs, zs, labels = [], [], []
    for v in vehicles:
        count = rng.poisson(density * v.length * v.width)
        local = rng.uniform(-0.5, 0.5, (count, 2)) * np.array([v.width, v.length])
        c, s = np.cos(v.yaw), np.sin(v.yaw)
        xs.append(v.lateral + c * local[:, 0] + s * local[:, 1])
        zs.append(v.forward - s * local[:, 0] + c * local[:, 1])
        labels.append(np.full(count, SegClass.OBSTACLE if v.parked else SegClass.VEHICLE, dtype=np.uint8))
    if not xs:
        return np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.uint8)
    return np.concatenate(xs), np.concatenate(zs), np.concatenate(labels)


def simulate_cloud(params: SceneParams, pose: Pose, spec: GridSpec, rng: np.random.Generator, road: Optional[RoadModel] = None):
    """Lidar-frame cloud of one frame plus the true segmentation class of every point."""
    road = road or RoadModel(params)
    x, z = _sample_ground(road, pose, spec, rng)
    labels = road.classify(x, z)
    y = np.zeros(x.shape)
    for v in params.vehicles:
        keep = ~_inside_convex(x, z, v.corners())
        x, y, z, labels = x[keep], y[keep], z[keep], labels[keep]

    vx, vz, vlabels = _sample_vehicles(params.vehicles, params.point_density, rng)
    x = np.concatenate([x, vx])
    y = np.concatenate([y, np.full(vx.shape, -1.0)])
    z = np.concatenate([z, vz])
    labels = np.concatenate([labels, vlabels])

    remission = np.select(
        [labels == SegClass.LANE_MARKING, labels == SegClass.ROAD, labels == SegClass.SIDEWALK],
        [params.marker_remission, params.road_remission, params.sidewalk_remission],
        default=0.1,
    )
    world = np.stack([x, y, z], axis=1)
    if params.point_noise > 0:
        world = world + rng.normal(0.0, params.point_noise, world.shape)

    lidar = CAM_FROM_LIDAR.inverse().compose(pose.inverse()).apply(world)
    cloud = PointCloud(points=lidar, remission=remission, frame=FrameTag.SENSOR)
    return cloud, labels


def splat_labels(cloud: PointCloud, labels: np.ndarray, K: CameraIntrinsics, cam_from_lidar: Pose = CAM_FROM_LIDAR) -> np.ndarray:
    """Semantic label image from the classes of projected points (no rendering)."""
    u, v, visible = project_points(cam_from_lidar.apply(cloud.points), K)
    image = np.zeros((K.height, K.width), dtype=np.uint8)
    for cls in SPLAT_ORDER:
        sel = visible & (labels == cls)
        image[np.floor(v[sel]).astype(np.int64), np.floor(u[sel]).astype(np.int64)] = cls
    return image


def splat_depth(cloud: PointCloud, K: CameraIntrinsics, cam_from_lidar: Pose = CAM_FROM_LIDAR) -> np.ndarray:
    """Sparse depth image (meters, 0 = no return), nearest point wins."""
    cam = cam_from_lidar.apply(cloud.points)
    u, v, visible = project_points(cam, K)
    depth = np.zeros((K.height, K.width), dtype=np.float64)
    order = np.argsort(-cam[visible, 2], kind="stable")
    rows = np.floor(v[visible]).astype(np.int64)[order]
    cols = np.floor(u[visible]).astype(np.int64)[order]
    depth[rows, cols] = cam[visible, 2][order]
    return depth


# ==============================
# SCENES
# ==============================
def generate_scene(params: SceneParams, spec: GridSpec = GridSpec()) -> List[SceneFrame]:
    rng = np.random.default_rng(params.seed)
    road = RoadModel(params)
    frames = []
    for i, pose in enumerate(road.ego_poses()):
        grid = ground_truth_grid(params, pose, spec, road)
        cloud, labels = simulate_cloud(params, pose, spec, rng, road)
        frames.append(SceneFrame(index=i, pose=pose, grid=grid, cloud=cloud, labels=labels, occlusion=grid.occlusion_layer))
    logger.info(f"✅ Generated {len(frames)} synthetic frames ({len(params.lane_widths)} lanes, {len(params.vehicles)} vehicles)")
    return frames


def simulate_prediction(gt: LabelGrid, noise_level: float, seed: Union[int, Sequence[int]] = 0) -> Tuple[ConfidenceGrid, np.ndarray]:
    """Noisy probabilistic prediction of a label grid, deterministic per seed."""
    if not 0.0 <= noise_level <= 1.0:
        raise ValueError(f"noise_level must lie in [0, 1], got {noise_level}")
    rng = np.random.default_rng(seed)
    n = len(CLASS_ORDER)
    classes = gt.class_layer.astype(np.int64)

    flip = rng.random(gt.spec.shape) < noise_level / 2
    shift = rng.integers(1, n, size=gt.spec.shape)
    noisy = np.where(flip, (classes + shift) % n, classes)

    onehot = (noisy[None] == np.arange(n)[:, None, None]).astype(np.float64)
    uniform = rng.random((n,) + gt.spec.shape)
    uniform /= uniform.sum(axis=0, keepdims=True)
    probs = (1.0 - noise_level) * onehot + noise_level * uniform

    lane_ids = np.zeros(gt.spec.shape, dtype=np.uint16)
    is_lane = noisy == SemanticClass.LANE.code
    existing = np.array(gt.lane_ids() or [1], dtype=np.uint16)
    random_ids = existing[rng.integers(0, existing.size, size=gt.spec.shape)]
    lane_ids[is_lane] = np.where(gt.lane_id_layer[is_lane] > 0, gt.lane_id_layer[is_lane], random_ids[is_lane])

    conf = ConfidenceGrid(
        spec=gt.spec,
        probs=np.clip(probs, 0.0, 1.0),
        channels=tuple(c.value for c in CLASS_ORDER),
        lane_id_layer=lane_ids,
    )
    return conf, lane_ids


# ==============================
# DATASET EXPORT
# ==============================
def write_dataset(params: SceneParams, out: Union[str, Path], spec: GridSpec = GridSpec(), sequence_id: str = "synth") -> Path:
    """Manifest-rooted dataset tree; returns the manifest path."""
    out = Path(out)
    frames = generate_scene(params, spec)
    K = params.intrinsics
    records = []
    for f in frames:
        name = f"{f.index:06d}"
        write_cloud(out / "velodyne" / f"{name}.bin", f.cloud)
        write_semantic_image(out / "semantic" / f"{name}.png", splat_labels(f.cloud, f.labels, K))
        write_depth(out / "depth" / f"{name}.png", splat_depth(f.cloud, K))
        write_grid(out / "labels" / f"{name}.bevg", f.grid)
        record = FrameRecord(
            index=f.index,
            timestamp=round(0.1 * f.index, 6),
            cloud=f"velodyne/{name}.bin",
            pose_index=f.index,
            semantic=f"semantic/{name}.png",
            depth=f"depth/{name}.png",
            label=f"labels/{name}.bevg",
        )
        if params.prediction_noise is not None:
            conf, _ = simulate_prediction(f.grid, params.prediction_noise, [params.seed, f.index])
            write_grid(out / "predictions" / f"{name}.bevg", conf)
            record = record.model_copy(update={"prediction": f"predictions/{name}.bevg"})
        records.append(record)

    write_poses(out / "poses.txt", [f.pose for f in frames])
    write_calibration(out / "calib.txt", K, CAM_FROM_LIDAR)
    manifest = SequenceManifest(
        sequence_id=sequence_id,
        frames=records,
        grid=spec,
        poses="poses.txt",
        calibration="calib.txt",
    )
    path = save_manifest(out / "manifest.json", manifest)
    logger.info(f"✅ Wrote synthetic dataset to {out}")
    return path
