# bev/raster.py
"""Grid coordinate system and rasterization primitives.

Metric BEV coordinates are (lateral, forward) in meters, measured from the
ego camera. Cells are addressed as (row, col) with row 0 at the far edge.
"""
from typing import Iterable, Optional, Sequence, Tuple
import logging
import numpy as np

from models.grid import GridSpec, LabelGrid, SemanticClass
from utils.errors import DegeneratePolygon, GridInvariantError

logger = logging.getLogger(__name__)

# Later entries are drawn over earlier ones
LAYER_ORDER = [
    SemanticClass.FREE,
    SemanticClass.SIDEWALK,
    SemanticClass.ROAD,
    SemanticClass.OTHER_ROAD,
    SemanticClass.CROSSWALK,
    SemanticClass.LANE,
    SemanticClass.VEHICLE,
]


# ==============================
# COORDINATES
# ==============================
def cell_of(point: Sequence[float], spec: GridSpec) -> Optional[Tuple[int, int]]:
    lateral, forward = float(point[0]), float(point[1])
    forward_idx = int(np.floor(forward / spec.resolution))
    col = int(np.floor(spec.cols / 2 + lateral / spec.resolution))
    if not (0 <= forward_idx < spec.rows and 0 <= col < spec.cols):
        return None
    return (spec.rows - 1 - forward_idx, col)


def cells_of(lateral, forward, spec: GridSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized cell_of: returns (rows, cols, valid); rows/cols are only meaningful where valid."""
    lateral = np.asarray(lateral, dtype=np.float64)
    forward = np.asarray(forward, dtype=np.float64)
    forward_idx = np.floor(forward / spec.resolution)
    col = np.floor(spec.cols / 2 + lateral / spec.resolution)
    valid = (forward_idx >= 0) & (forward_idx < spec.rows) & (col >= 0) & (col < spec.cols)
    rows = np.where(valid, spec.rows - 1 - forward_idx, 0).astype(np.int64)
    cols = np.where(valid, col, 0).astype(np.int64)
    return rows, cols, valid


def cell_center(row: int, col: int, spec: GridSpec) -> Tuple[float, float]:
    forward = (spec.rows - 1 - row + 0.5) * spec.resolution
    lateral = (col - spec.cols / 2 + 0.5) * spec.resolution
    return (lateral, forward)


def cell_centers(spec: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """(lateral, forward) of every cell center, each shaped (rows, cols)."""
    rows = np.arange(spec.rows)
    cols = np.arange(spec.cols)
    forward = (spec.rows - 1 - rows + 0.5) * spec.resolution
    lateral = (cols - spec.cols / 2 + 0.5) * spec.resolution
    return np.broadcast_to(lateral[None, :], spec.shape), np.broadcast_to(forward[:, None], spec.shape)


# ==============================
# POLYGONS
# ==============================
def polygon_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def points_in_polygon(px: np.ndarray, py: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Even-odd rule, evaluated for every (px, py)."""
    inside = np.zeros(px.shape, dtype=bool)
    x1, y1 = vertices[:, 0], vertices[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    lo, hi = (float(py.min()), float(py.max())) if py.size else (0.0, -1.0)
    for ax, ay, bx, by in zip(x1, y1, x2, y2):
        if max(ay, by) < lo or min(ay, by) > hi:
            continue
        crosses = (ay > py) != (by > py)
        if not np.any(crosses):
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            x_hit = ax + (py - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (px < x_hit)
    return inside


def polygon_mask(vertices, spec: GridSpec) -> np.ndarray:
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.ndim != 2 or vertices.shape[0] < 3 or vertices.shape[1] != 2:
        raise DegeneratePolygon(f"polygon needs at least 3 (lateral, forward) vertices, got {vertices.shape}")
    if abs(polygon_area(vertices)) < 1e-12:
        raise DegeneratePolygon("polygon has zero area")

    mask = np.zeros(spec.shape, dtype=bool)
    lateral, forward = cell_centers(spec)
    # Only test cells inside the polygon's bounding box
    lo_lat, lo_fwd = vertices.min(axis=0)
    hi_lat, hi_fwd = vertices.max(axis=0)
    box = (lateral[0] >= lo_lat) & (lateral[0] <= hi_lat)
    rows = (forward[:, 0] >= lo_fwd) & (forward[:, 0] <= hi_fwd)
    if not box.any() or not rows.any():
        return mask
    r_idx = np.nonzero(rows)[0]
    c_idx = np.nonzero(box)[0]
    sub_lat = lateral[np.ix_(r_idx, c_idx)]
    sub_fwd = forward[np.ix_(r_idx, c_idx)]
    mask[np.ix_(r_idx, c_idx)] = points_in_polygon(sub_lat, sub_fwd, vertices)
    return mask


def paint_mask(grid: LabelGrid, mask: np.ndarray, cls: SemanticClass, lane_id: int = 0) -> LabelGrid:
    cls = SemanticClass(cls)
    if cls == SemanticClass.LANE and lane_id < 1:
        raise GridInvariantError("lane cells need a lane id >= 1")
    classes = grid.class_layer.copy()
    lane_ids = grid.lane_id_layer.copy()
    classes[mask] = cls.code
    lane_ids[mask] = lane_id if cls == SemanticClass.LANE else 0
    return grid.replace(class_layer=classes, lane_id_layer=lane_ids)


def rasterize_polygon(vertices, cls: SemanticClass, lane_id: int, grid: LabelGrid) -> LabelGrid:
    mask = polygon_mask(vertices, grid.spec)
    return paint_mask(grid, mask, cls, lane_id)


def rasterize_many(grid: LabelGrid, items: Iterable[Tuple[np.ndarray, SemanticClass, int]]) -> LabelGrid:
    """Rasterize (vertices, class, lane_id) items in LAYER_ORDER, keeping input order within a layer."""
    items = list(items)
    rank = {cls: i for i, cls in enumerate(LAYER_ORDER)}
    ordered = sorted(range(len(items)), key=lambda i: (rank[SemanticClass(items[i][1])], i))
    for i in ordered:
        vertices, cls, lane_id = items[i]
        grid = rasterize_polygon(vertices, cls, lane_id, grid)
    return grid


def binary_mask(grid: LabelGrid, cls: SemanticClass) -> np.ndarray:
    return grid.class_layer == SemanticClass(cls).code
