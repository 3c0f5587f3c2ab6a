import numpy as np
import pytest

from bev.raster import (
    binary_mask, cell_center, cell_of, cells_of, polygon_mask, rasterize_many, rasterize_polygon,
)
from models.grid import ConfidenceGrid, GridSpec, LabelGrid, SemanticClass
from utils.errors import DegeneratePolygon, GridInvariantError, ShapeMismatch

from helpers import make_grid


# ----------------- cell_of -----------------
def test_cell_of_ego_origin(spec):
    assert cell_of((0.0, 0.0), spec) == (255, 128)


def test_cell_of_beyond_extent(spec):
    assert cell_of((0.0, 41.0), spec) is None
    assert cell_of((0.0, -0.01), spec) is None
    assert cell_of((20.0, 5.0), spec) is None


def test_cell_of_floor_arithmetic(spec):
    assert cell_of((-3.2, 20.0), spec) == (127, 107)


def test_cells_of_matches_scalar_version(spec, rng):
    lateral = rng.uniform(-25, 25, 500)
    forward = rng.uniform(-5, 45, 500)
    rows, cols, valid = cells_of(lateral, forward, spec)
    for i in range(500):
        expected = cell_of((lateral[i], forward[i]), spec)
        if expected is None:
            assert not valid[i]
        else:
            assert valid[i]
            assert (rows[i], cols[i]) == expected


def test_cell_center_round_trips(spec):
    for row, col in [(0, 0), (255, 128), (17, 200)]:
        assert cell_of(cell_center(row, col, spec), spec) == (row, col)


# ----------------- rasterization -----------------
def test_rectangle_covers_exactly_four_cells(spec):
    res = spec.resolution
    rect = [(-20.0, 40.0 - 2 * res), (-20.0 + 2 * res, 40.0 - 2 * res), (-20.0 + 2 * res, 40.0), (-20.0, 40.0)]
    grid = rasterize_polygon(rect, SemanticClass.ROAD, 0, LabelGrid.empty(spec))
    road = binary_mask(grid, SemanticClass.ROAD)
    assert road.sum() == 4
    assert road[:2, :2].all()


def test_polygon_outside_extent_leaves_grid_unchanged(small_spec):
    grid = LabelGrid.empty(small_spec)
    out = rasterize_polygon([(100, 100), (101, 100), (101, 101)], SemanticClass.ROAD, 0, grid)
    np.testing.assert_array_equal(out.class_layer, grid.class_layer)


def test_two_vertices_is_degenerate(small_spec):
    with pytest.raises(DegeneratePolygon):
        rasterize_polygon([(0, 0), (1, 1)], SemanticClass.ROAD, 0, LabelGrid.empty(small_spec))


def test_zero_area_polygon_is_degenerate(small_spec):
    with pytest.raises(DegeneratePolygon):
        polygon_mask([(0, 0), (1, 1), (2, 2)], small_spec)


def test_mask_matches_brute_force_point_in_triangle(small_spec):
    tri = np.array([(-6.1, 1.3), (5.2, 3.1), (-0.9, 13.7)])
    mask = polygon_mask(tri, small_spec)
    for row in range(small_spec.rows):
        for col in range(small_spec.cols):
            x, z = cell_center(row, col, small_spec)
            signs = []
            for a, b in zip(tri, np.roll(tri, -1, axis=0)):
                signs.append((b[0] - a[0]) * (z - a[1]) - (b[1] - a[1]) * (x - a[0]))
            inside = all(s > 0 for s in signs) or all(s < 0 for s in signs)
            assert mask[row, col] == inside


def test_lane_needs_positive_id(small_spec):
    with pytest.raises(GridInvariantError):
        rasterize_polygon([(-1, 1), (1, 1), (1, 3), (-1, 3)], SemanticClass.LANE, 0, LabelGrid.empty(small_spec))


def test_lane_cells_carry_their_id(small_spec):
    grid = rasterize_polygon([(-1, 1), (1, 1), (1, 3), (-1, 3)], SemanticClass.LANE, 2, LabelGrid.empty(small_spec))
    lane = binary_mask(grid, SemanticClass.LANE)
    assert lane.any()
    assert set(np.unique(grid.lane_id_layer[lane])) == {2}
    assert not grid.lane_id_layer[~lane].any()


def test_overwriting_lane_clears_lane_id(small_spec):
    square = [(-1, 1), (1, 1), (1, 3), (-1, 3)]
    grid = rasterize_polygon(square, SemanticClass.LANE, 1, LabelGrid.empty(small_spec))
    grid = rasterize_polygon(square, SemanticClass.VEHICLE, 0, grid)
    assert not grid.lane_id_layer.any()


def test_rasterize_many_draws_vehicles_last(small_spec):
    lane = np.array([(-2, 0), (2, 0), (2, 10), (-2, 10)], dtype=float)
    car = np.array([(-1, 4), (1, 4), (1, 6), (-1, 6)], dtype=float)
    grid = rasterize_many(LabelGrid.empty(small_spec), [(car, SemanticClass.VEHICLE, 0), (lane, SemanticClass.LANE, 1)])
    assert binary_mask(grid, SemanticClass.VEHICLE).sum() == 16
    assert binary_mask(grid, SemanticClass.LANE).sum() == 8 * 20 - 16


# ----------------- masks and invariants -----------------
def test_binary_mask_of_free_grid(small_spec):
    assert not binary_mask(LabelGrid.empty(small_spec), SemanticClass.ROAD).any()


def test_binary_masks_partition_the_grid(small_spec, rng):
    classes = rng.integers(0, 6, small_spec.shape)
    grid = make_grid(small_spec, classes)
    masks = [binary_mask(grid, c) for c in SemanticClass]
    assert np.all(np.sum(masks, axis=0) == 1)


def test_binary_mask_popcount(small_spec):
    classes = np.zeros(small_spec.shape, dtype=np.uint8)
    classes[3, 4:11] = SemanticClass.ROAD.code
    assert binary_mask(make_grid(small_spec, classes), SemanticClass.ROAD).sum() == 7


def test_lane_id_outside_lane_is_rejected(small_spec):
    lane_ids = np.zeros(small_spec.shape)
    lane_ids[0, 0] = 1
    with pytest.raises(GridInvariantError):
        make_grid(small_spec, np.zeros(small_spec.shape), lane_ids=lane_ids)


def test_layer_shape_must_match_spec(small_spec):
    with pytest.raises(ShapeMismatch):
        make_grid(small_spec, np.zeros((4, 4)))


def test_confidence_values_must_be_probabilities(small_spec):
    probs = np.full((1,) + small_spec.shape, 1.5)
    with pytest.raises(GridInvariantError):
        ConfidenceGrid(spec=small_spec, probs=probs, channels=("road",))


def test_label_grid_is_read_only(small_spec):
    grid = LabelGrid.empty(small_spec)
    with pytest.raises(ValueError):
        grid.class_layer[0, 0] = 1


def test_grid_spec_extent():
    spec = GridSpec()
    assert spec.forward_extent == pytest.approx(40.0)
    assert spec.lateral_extent == pytest.approx(40.0)
