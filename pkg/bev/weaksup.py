# bev/weaksup.py
"""Weak-supervision label generation from registered, semantically painted lidar.

Pipeline per target frame: paint -> register/accumulate -> fill stationary
obstacles -> extract lane markers -> cluster -> cubic fit -> road boundary
-> lane assembly -> rasterize.
"""
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as P
from pydantic import BaseModel, ConfigDict
from scipy import ndimage
from sklearn.cluster import DBSCAN

from bev.geom import project_points
from bev.raster import cells_of, cell_centers, paint_mask, polygon_mask
from models.geometry import CameraIntrinsics, FrameTag, PointCloud, Pose
from models.grid import GridSpec, LabelGrid, SemanticClass
from models.lanes import (
    Bound, LaneBoundary, LaneInstance, PaintedCloud, RoadBounds, RoadEdge,
    SegClass, STATIC_SEG_CLASSES,
)
from models.settings import MarkerSource, WeakSupSettings
from utils.errors import (
    BevBenchError, DegeneratePolygon, EmptyInput, GridInvariantError, NoEgoLane,
    NoRoad, RankDeficient, ShapeMismatch, SpanTooShort,
)
from utils.parallel import map_frames

logger = logging.getLogger(__name__)

Frame = Tuple[PaintedCloud, Pose]

# Majority-vote fusion: earlier entries win ties
SEG_TO_SEMANTIC = {
    SegClass.LANE_MARKING: SemanticClass.ROAD,
    SegClass.CROSSWALK: SemanticClass.CROSSWALK,
    SegClass.ROAD: SemanticClass.ROAD,
    SegClass.SIDEWALK: SemanticClass.SIDEWALK,
    SegClass.OTHER_ROAD: SemanticClass.OTHER_ROAD,
}
DRIVABLE = (SemanticClass.ROAD, SemanticClass.LANE)


def seg_classes_from_names(names: Sequence[str]) -> Tuple[SegClass, ...]:
    try:
        return tuple(SegClass[name.upper()] for name in names)
    except KeyError as e:
        raise ValueError(f"unknown segmentation class {e}")


# ==============================
# PAINTING
# ==============================
def paint_cloud(
    cloud: PointCloud,
    seg: np.ndarray,
    K: CameraIntrinsics,
    cam_from_lidar: Pose,
    frame_index: int = 0,
) -> PaintedCloud:
    seg = np.asarray(seg)
    if seg.shape != (K.height, K.width):
        raise ShapeMismatch(f"segmentation image {seg.shape} does not match camera {K.height}x{K.width}")

    cam_points = cam_from_lidar.apply(cloud.points)
    u, v, visible = project_points(cam_points, K)
    labels = np.full(len(cloud), SegClass.UNLABELED, dtype=np.uint8)
    labels[visible] = seg[np.floor(v[visible]).astype(np.int64), np.floor(u[visible]).astype(np.int64)]

    camera_cloud = PointCloud(points=cam_points, remission=cloud.remission, frame=FrameTag.CAMERA)
    return PaintedCloud(cloud=camera_cloud, labels=labels, frame_index=frame_index)


# ==============================
# REGISTRATION
# ==============================
class SequenceCloud(BaseModel):
    """All painted points of a sequence registered once into the world frame."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    labels: np.ndarray
    remission: np.ndarray

    @classmethod
    def from_frames(cls, frames: Sequence[Frame]) -> "SequenceCloud":
        frames = list(frames)
        if not frames:
            raise EmptyInput("no frames to register")
        points = [pose.apply(painted.cloud.points) for painted, pose in frames]
        return cls(
            points=np.concatenate(points) if points else np.zeros((0, 3)),
            labels=np.concatenate([painted.labels for painted, _ in frames]),
            remission=np.concatenate([painted.cloud.remission for painted, _ in frames]),
        )

    def in_target(self, target: Pose) -> np.ndarray:
        """Points in the target camera frame."""
        return target.inverse().apply(self.points)


def _target_cells(seq: SequenceCloud, target: Pose, spec: GridSpec, keep: np.ndarray):
    local = seq.in_target(target)[keep]
    # Flat-plane projection: height (camera y) is dropped
    rows, cols, valid = cells_of(local[:, 0], local[:, 2], spec)
    return rows, cols, valid, local


def register_points(frames: Sequence[Frame], target: Pose, spec: GridSpec, classes: Sequence[SegClass]) -> np.ndarray:
    """BEV (lateral, forward) of the points of the given classes inside the grid extent."""
    seq = SequenceCloud.from_frames(frames)
    return _bev_points(seq, target, spec, np.isin(seq.labels, np.array(classes, dtype=np.uint8)))


def _bev_points(seq: SequenceCloud, target: Pose, spec: GridSpec, keep: np.ndarray) -> np.ndarray:
    _, _, valid, local = _target_cells(seq, target, spec, keep)
    return np.stack([local[valid, 0], local[valid, 2]], axis=1)


# ==============================
# STATIC ACCUMULATION
# ==============================
def _accumulate(seq: SequenceCloud, target: Pose, spec: GridSpec) -> LabelGrid:
    static = np.array(STATIC_SEG_CLASSES, dtype=np.uint8)
    keep = np.isin(seq.labels, static)
    rows, cols, valid, _ = _target_cells(seq, target, spec, keep)
    labels = seq.labels[keep][valid]
    lookup = np.zeros(256, dtype=np.int64)
    lookup[static] = np.arange(len(static))
    vote_idx = lookup[labels]

    n_cells = spec.rows * spec.cols
    flat = (vote_idx * n_cells + rows[valid] * spec.cols + cols[valid]).astype(np.int64)
    votes = np.bincount(flat, minlength=len(static) * n_cells).reshape((len(static),) + spec.shape)

    winner = np.argmax(votes, axis=0)
    codes = np.array([SEG_TO_SEMANTIC[SegClass(c)].code for c in static], dtype=np.uint8)
    classes = np.where(votes.sum(axis=0) > 0, codes[winner], SemanticClass.FREE.code)
    return LabelGrid.empty(spec).replace(class_layer=classes)


def accumulate_static(frames: Sequence[Frame], target_frame: Pose, spec: GridSpec) -> LabelGrid:
    return _accumulate(SequenceCloud.from_frames(frames), target_frame, spec)


def _obstacle_mask(seq: SequenceCloud, target: Pose, spec: GridSpec, classes: Sequence[SegClass]) -> np.ndarray:
    keep = np.isin(seq.labels, np.array(classes, dtype=np.uint8))
    rows, cols, valid, _ = _target_cells(seq, target, spec, keep)
    mask = np.zeros(spec.shape, dtype=bool)
    mask[rows[valid], cols[valid]] = True
    return mask


def fill_obstacle_cells(grid: LabelGrid, obstacle: np.ndarray) -> LabelGrid:
    """Relabel obstacle cells as Road while most of their in-grid 4-neighbours are Road."""
    cross = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    in_grid = ndimage.convolve(np.ones(grid.spec.shape, dtype=np.int64), cross, mode="constant", cval=0)
    classes = grid.class_layer.copy()
    pending = obstacle & ~np.isin(classes, [c.code for c in DRIVABLE])
    filled = 0
    while pending.any():
        road = (classes == SemanticClass.ROAD.code).astype(np.int64)
        road_nb = ndimage.convolve(road, cross, mode="constant", cval=0)
        grow = pending & (2 * road_nb > in_grid)
        if not grow.any():
            break
        classes[grow] = SemanticClass.ROAD.code
        pending &= ~grow
        filled += int(grow.sum())
    if filled:
        logger.debug(f"Filled {filled} stationary-obstacle cells as road")
    return grid.replace(class_layer=classes)


def fill_stationary_obstacles(
    grid: LabelGrid,
    frames: Sequence[Frame],
    target_frame: Optional[Pose] = None,
    obstacle_classes: Sequence[SegClass] = (SegClass.OBSTACLE,),
) -> LabelGrid:
    frames = list(frames)
    if not frames:
        return grid
    target = target_frame or Pose.identity()
    obstacle = _obstacle_mask(SequenceCloud.from_frames(frames), target, grid.spec, obstacle_classes)
    return fill_obstacle_cells(grid, obstacle)


# ==============================
# LANE MARKERS
# ==============================
def _marker_mask(seq: SequenceCloud, settings: WeakSupSettings) -> np.ndarray:
    semantic = seq.labels == SegClass.LANE_MARKING
    lo, hi = settings.marker_remission
    bright = (
        np.isin(seq.labels, [SegClass.ROAD, SegClass.LANE_MARKING])
        & (seq.remission >= lo) & (seq.remission <= hi)
    )
    if settings.marker_source == MarkerSource.SEMANTIC:
        return semantic
    if settings.marker_source == MarkerSource.REMISSION:
        return bright
    return semantic | bright


def extract_lane_markers(
    frames: Sequence[Frame],
    target_frame: Pose,
    spec: GridSpec,
    settings: WeakSupSettings = WeakSupSettings(),
) -> np.ndarray:
    seq = SequenceCloud.from_frames(frames)
    return _bev_points(seq, target_frame, spec, _marker_mask(seq, settings))


def cluster_boundaries(marker_points: np.ndarray, eps: float = 0.5, min_pts: int = 8) -> List[np.ndarray]:
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be > 0 and min_pts >= 1")
    marker_points = np.asarray(marker_points, dtype=np.float64).reshape(-1, 2)
    if marker_points.shape[0] == 0:
        return []
    labels = DBSCAN(eps=eps, min_samples=min_pts).fit(marker_points).labels_
    clusters = [marker_points[labels == k] for k in np.unique(labels) if k >= 0]
    logger.debug(f"DBSCAN: {len(clusters)} clusters, {int((labels < 0).sum())} noise points")
    return clusters


# ==============================
# CURVE FITTING
# ==============================
def fit_boundary(
    cluster: np.ndarray,
    min_span: float = 4.0,
    min_points: int = 4,
    ridge: float = 1e-8,
    cluster_id: int = -1,
) -> LaneBoundary:
    cluster = np.asarray(cluster, dtype=np.float64).reshape(-1, 2)
    lateral, z = cluster[:, 0], cluster[:, 1]
    if cluster.shape[0] == 0:
        raise SpanTooShort("empty cluster")
    z_lo, z_hi = float(z.min()), float(z.max())
    if z_hi - z_lo < min_span:
        raise SpanTooShort(f"cluster spans {z_hi - z_lo:.2f} m, need {min_span} m")
    if cluster.shape[0] < max(4, min_points):
        raise RankDeficient(f"cubic fit needs at least {max(4, min_points)} points, got {cluster.shape[0]}")

    # Fit in a normalized variable t in [-1, 1] for conditioning
    mid, half = 0.5 * (z_lo + z_hi), 0.5 * (z_hi - z_lo)
    t = (z - mid) / half
    V = P.polyvander(t, 3)
    coef_t, _, rank, _ = np.linalg.lstsq(V, lateral, rcond=None)
    if rank < 4:
        logger.warning(f"⚠️ Rank-deficient boundary fit (rank {rank}), using ridge {ridge}")
        coef_t = np.linalg.solve(V.T @ V + ridge * np.eye(4), V.T @ lateral)
    if not np.all(np.isfinite(coef_t)):
        raise RankDeficient("boundary fit did not produce finite coefficients")

    in_z = Polynomial(coef_t)(Polynomial([-mid / half, 1.0 / half]))
    coefficients = np.zeros(4)
    coefficients[: len(in_z.coef)] = in_z.coef[:4]
    residual = float(np.sqrt(np.mean((P.polyval(z, coefficients) - lateral) ** 2)))
    return LaneBoundary(
        coefficients=tuple(float(c) for c in coefficients),
        z_lo=z_lo,
        z_hi=z_hi,
        cluster_id=cluster_id,
        residual=residual,
    )


# ==============================
# ROAD BOUNDARY
# ==============================
def road_boundary(grid: LabelGrid, window: int = 5) -> RoadBounds:
    drivable = np.isin(grid.class_layer, [c.code for c in DRIVABLE])
    rows = np.nonzero(drivable.any(axis=1))[0]
    if rows.size == 0:
        raise NoRoad("grid has no drivable cells")
    # Near rows first (forward ascending)
    rows = rows[::-1]
    sub = drivable[rows]
    left_col = np.argmax(sub, axis=1)
    right_col = grid.spec.cols - 1 - np.argmax(sub[:, ::-1], axis=1)

    lateral, forward = cell_centers(grid.spec)
    fwd = forward[rows, 0]
    left = lateral[0, left_col]
    right = lateral[0, right_col]
    if window > 1:
        left = ndimage.median_filter(left, size=window, mode="nearest")
        right = ndimage.median_filter(right, size=window, mode="nearest")
    return RoadBounds(
        left=RoadEdge(vertices=np.stack([left, fwd], axis=1)),
        right=RoadEdge(vertices=np.stack([right, fwd], axis=1)),
    )


# ==============================
# LANE ASSEMBLY
# ==============================
def _lane_polygon(left: Bound, right: Bound, z_lo: float, z_hi: float, step: float) -> np.ndarray:
    n = max(2, int(np.ceil((z_hi - z_lo) / step)) + 1)
    z = np.linspace(z_lo, z_hi, n)
    left_pts = np.stack([left.lateral_at(z), z], axis=1)
    right_pts = np.stack([right.lateral_at(z), z], axis=1)[::-1]
    return np.concatenate([left_pts, right_pts])


def lane_ids_for_sides(sides: Sequence[int]) -> Dict[int, int]:
    """Ego (side 0) gets id 1; the rest 2..K ordered by |side|, left before right."""
    ordered = sorted((s for s in sides if s != 0), key=lambda s: (abs(s), s > 0))
    ids = {0: 1} if 0 in sides else {}
    ids.update({side: i + 2 for i, side in enumerate(ordered)})
    return ids


def _close_with_edges(fitted: List[LaneBoundary], road_bounds: RoadBounds, z_ref: float) -> List[Bound]:
    """Road edges only close the outermost lanes; an edge inside the fitted span or undefined at z_ref is dropped."""
    left = road_bounds.left.reference_lateral(z_ref)
    right = road_bounds.right.reference_lateral(z_ref)
    if not fitted:
        return [road_bounds.left, road_bounds.right] if np.isfinite(left) and np.isfinite(right) else []
    curves: List[Bound] = list(fitted)
    if np.isfinite(left) and left < fitted[0].reference_lateral(z_ref):
        curves.insert(0, road_bounds.left)
    else:
        logger.debug(f"Dropping left road edge ({left:.2f} m at z_ref)")
    if np.isfinite(right) and right > fitted[-1].reference_lateral(z_ref):
        curves.append(road_bounds.right)
    else:
        logger.debug(f"Dropping right road edge ({right:.2f} m at z_ref)")
    return curves


def assemble_lanes(
    boundaries: Sequence[LaneBoundary],
    road_bounds: Optional[RoadBounds],
    spec: GridSpec,
    settings: WeakSupSettings = WeakSupSettings(),
) -> List[LaneInstance]:
    fitted = sorted(boundaries, key=lambda c: c.reference_lateral(settings.z_ref))
    curves: List[Bound] = list(fitted)
    if road_bounds is not None:
        curves = _close_with_edges(fitted, road_bounds, settings.z_ref)
    if len(curves) < 2:
        if boundaries:
            raise NoEgoLane("need at least two bounding curves to form a lane")
        return []

    keys = [c.reference_lateral(settings.z_ref) for c in curves]
    pairs = []
    for a, b in zip(range(len(curves) - 1), range(1, len(curves))):
        width = keys[b] - keys[a]
        z_lo = max(curves[a].z_lo, curves[b].z_lo, 0.0)
        z_hi = min(curves[a].z_hi, curves[b].z_hi, spec.forward_extent)
        if width < settings.min_lane_width or z_hi <= z_lo:
            continue
        pairs.append((a, b, z_lo, z_hi))

    ego = [i for i, (a, b, _, _) in enumerate(pairs) if keys[a] <= 0.0 < keys[b]]
    if not ego:
        raise NoEgoLane(f"no lane straddles lateral 0 at z_ref={settings.z_ref} m")
    ego_pos = ego[0]

    sides = [i - ego_pos for i in range(len(pairs))]
    ids = lane_ids_for_sides(sides)
    lanes = []
    for side, (a, b, z_lo, z_hi) in zip(sides, pairs):
        try:
            mask = polygon_mask(_lane_polygon(curves[a], curves[b], z_lo, z_hi, settings.lane_sample_step), spec)
        except DegeneratePolygon:
            mask = np.zeros(spec.shape, dtype=bool)
        lanes.append(LaneInstance(lane_id=ids[side], side=side, left=curves[a], right=curves[b], mask=mask))
    return sorted(lanes, key=lambda lane: lane.lane_id)


def rasterize_lanes(grid: LabelGrid, lanes: Sequence[LaneInstance]) -> LabelGrid:
    for lane in sorted(lanes, key=lambda lane: lane.lane_id):
        if lane.mask is not None and lane.mask.any():
            grid = paint_mask(grid, lane.mask, SemanticClass.LANE, lane.lane_id)
    return _compact_lane_ids(grid)


def _compact_lane_ids(grid: LabelGrid) -> LabelGrid:
    """Renumber ids to 1..K if overwrites removed a lane entirely (ego stays 1)."""
    ids = grid.lane_ids()
    if ids == list(range(1, len(ids) + 1)):
        return grid
    remap = np.zeros(int(grid.lane_id_layer.max()) + 1, dtype=np.uint16)
    for new_id, old_id in enumerate(ids, start=1):
        remap[old_id] = new_id
    return grid.replace(lane_id_layer=remap[grid.lane_id_layer])


# ==============================
# END-TO-END
# ==============================
class FrameLabels(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int
    grid: Optional[LabelGrid] = None
    lanes: List[LaneInstance] = []
    boundaries: List[LaneBoundary] = []
    error: Optional[str] = None
    needs_review: bool = False

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def max_residual(self) -> float:
        return max((b.residual for b in self.boundaries), default=0.0)


def _fit_clusters(clusters: Sequence[np.ndarray], settings: WeakSupSettings) -> List[LaneBoundary]:
    fitted = []
    for k, cluster in enumerate(clusters):
        try:
            fitted.append(fit_boundary(cluster, settings.min_span, settings.min_fit_points, settings.ridge, cluster_id=k))
        except (SpanTooShort, RankDeficient) as e:
            logger.debug(f"Skipping cluster {k}: {e}")
    return fitted


def label_frame(seq: SequenceCloud, target: Pose, spec: GridSpec, settings: WeakSupSettings, index: int = 0) -> FrameLabels:
    grid = _accumulate(seq, target, spec)
    obstacles = _obstacle_mask(seq, target, spec, seg_classes_from_names(settings.obstacle_classes))
    grid = fill_obstacle_cells(grid, obstacles)

    markers = _bev_points(seq, target, spec, _marker_mask(seq, settings))
    boundaries = _fit_clusters(cluster_boundaries(markers, settings.eps, settings.min_pts), settings)

    lanes: List[LaneInstance] = []
    if boundaries:
        lanes = assemble_lanes(boundaries, road_boundary(grid, settings.median_window), spec, settings)
        grid = rasterize_lanes(grid, lanes)
    if not grid.lane_ids_contiguous():
        raise GridInvariantError(f"frame {index}: lane ids {grid.lane_ids()} are not contiguous")

    result = FrameLabels(index=index, grid=grid, lanes=lanes, boundaries=boundaries)
    if result.max_residual > settings.residual_review:
        logger.warning(f"⚠️ Frame {index}: boundary residual {result.max_residual:.3f} m flagged for review")
        result = result.model_copy(update={"needs_review": True})
    return result


def _label_task(args) -> FrameLabels:
    seq, target, spec, settings, i = args
    try:
        return label_frame(seq, target, spec, settings, index=i)
    except BevBenchError as e:
        logger.error(f"❌ Frame {i}: {type(e).__name__}: {e}")
        return FrameLabels(index=i, error=f"{type(e).__name__}: {e}")


def generate_labels(
    frames: Sequence[Frame],
    spec: GridSpec = GridSpec(),
    settings: WeakSupSettings = WeakSupSettings(),
    targets: Optional[Sequence[int]] = None,
    jobs: int = 1,
) -> List[FrameLabels]:
    """Weak label grid for each frame of a sequence (all frames registered into each target).

    A frame that fails is reported in its FrameLabels and does not stop the others.
    """
    frames = list(frames)
    seq = SequenceCloud.from_frames(frames)
    targets = range(len(frames)) if targets is None else targets
    work = [(seq, frames[i][1], spec, settings, i) for i in targets]
    return map_frames(_label_task, work, jobs=jobs, desc="labels")


def sequence_lane_ids(per_frame: Sequence[Sequence[LaneInstance]]) -> Dict[int, int]:
    """Sequence-unique lane ids keyed by side index (a lane keeps its id across frames)."""
    sides = sorted({lane.side for lanes in per_frame for lane in lanes})
    return lane_ids_for_sides(sides)
