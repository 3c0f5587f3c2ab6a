import numpy as np
import pytest

from bev.metrics import (
    average_precision, channel_confidence, evaluate_frame, evaluate_sequence, extract_lane_instances,
    iou, lane_detection_score, miou_from_confidence, occluded_miou, pooled_lane_detection, pr_curve,
    score_matches,
)
from bev.raster import rasterize_polygon
from models.grid import CLASS_ORDER, ConfidenceGrid, GridSpec, LabelGrid, SemanticClass
from models.lanes import LaneInstance
from models.report import EVAL_CHANNELS
from models.settings import Interpolation, MetricSettings, TieHandling
from utils.errors import EmptyGroundTruth, NoGroundTruth, NoOccludedCells, ShapeMismatch

from helpers import make_grid


def block(shape, rows, cols):
    mask = np.zeros(shape, dtype=bool)
    mask[rows, cols] = True
    return mask


def lane(mask, confidence=1.0, lane_id=1):
    return LaneInstance(lane_id=lane_id, mask=mask, confidence=confidence)


@pytest.fixture
def scene_grid(small_spec):
    """Road with two lanes, a crosswalk, a sidewalk strip, a vehicle and an occluded patch."""
    grid = LabelGrid.empty(small_spec)
    grid = rasterize_polygon([(-6, 0), (6, 0), (6, 16), (-6, 16)], SemanticClass.ROAD, 0, grid)
    grid = rasterize_polygon([(-8, 0), (-6, 0), (-6, 16), (-8, 16)], SemanticClass.SIDEWALK, 0, grid)
    grid = rasterize_polygon([(-2, 0), (2, 0), (2, 16), (-2, 16)], SemanticClass.LANE, 1, grid)
    grid = rasterize_polygon([(2, 0), (5.5, 0), (5.5, 16), (2, 16)], SemanticClass.LANE, 2, grid)
    grid = rasterize_polygon([(-6, 12), (-2, 12), (-2, 14), (-6, 14)], SemanticClass.CROSSWALK, 0, grid)
    grid = rasterize_polygon([(-1, 6), (1, 6), (1, 9), (-1, 9)], SemanticClass.VEHICLE, 0, grid)
    occlusion = block(small_spec.shape, slice(0, 12), slice(12, 20))
    return grid.replace(occlusion_layer=occlusion)


# ----------------- IoU -----------------
def test_iou_identical_and_disjoint():
    a = block((8, 8), slice(0, 2), slice(0, 2))
    assert iou(a, a) == 1.0
    assert iou(a, block((8, 8), slice(4, 6), slice(4, 6))) == 0.0


def test_iou_of_overlapping_blocks():
    a = block((8, 8), slice(0, 2), slice(0, 2))
    b = block((8, 8), slice(0, 2), slice(1, 3))
    assert iou(a, b) == pytest.approx(2 / 6)


def test_iou_of_two_empty_masks_is_one():
    assert iou(np.zeros((3, 3), bool), np.zeros((3, 3), bool)) == 1.0


def test_iou_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        iou(np.zeros((3, 3), bool), np.zeros((4, 4), bool))


# ----------------- AP -----------------
def test_perfect_ranking_gives_ap_one(rng):
    gt = rng.random((16, 16)) < 0.3
    conf = np.where(gt, 0.6 + 0.4 * rng.random(gt.shape), 0.5 * rng.random(gt.shape))
    assert average_precision(conf, gt) == pytest.approx(1.0)


def test_hand_ranked_sweep():
    conf = np.array([0.9, 0.8, 0.7])
    gt = np.array([True, False, True])
    assert average_precision(conf, gt) == pytest.approx(0.5 + (2 / 3) * 0.5)


def test_eleven_point_interpolation():
    conf = np.array([0.9, 0.8, 0.7])
    gt = np.array([True, False, True])
    ap = average_precision(conf, gt, interpolation=Interpolation.ELEVEN_POINT)
    assert ap == pytest.approx((6 * 1.0 + 5 * (2 / 3)) / 11)


def test_uniform_confidence_is_one_tie_group():
    gt = np.zeros((8, 8), dtype=bool)
    gt[:2] = True
    conf = np.full(gt.shape, 0.5)
    assert average_precision(conf, gt) == pytest.approx(0.25)
    curve = pr_curve(conf, gt)
    assert len(curve) == 1
    assert curve.precision[0] == pytest.approx(0.25)
    assert curve.recall[0] == 1.0


def test_ordered_ties_follow_cell_order():
    gt = np.array([True, False, False, False])
    conf = np.full(4, 0.5)
    assert average_precision(conf, gt, tie_handling=TieHandling.ORDERED) == pytest.approx(1.0)
    assert average_precision(conf, gt, tie_handling=TieHandling.GROUP) == pytest.approx(0.25)


def test_ap_without_positives_is_undefined():
    with pytest.raises(EmptyGroundTruth):
        average_precision(np.ones(4), np.zeros(4, dtype=bool))


def test_recall_is_monotone(rng):
    conf = np.round(rng.random(400), 2)
    gt = rng.random(400) < 0.2
    curve = pr_curve(conf, gt)
    assert np.all(np.diff(curve.recall) >= 0)
    assert curve.recall[-1] == 1.0


# ----------------- thresholded IoU -----------------
def test_miou_of_one_hot_prediction(scene_grid):
    conf = ConfidenceGrid.one_hot(scene_grid)
    for cls in (SemanticClass.ROAD, SemanticClass.LANE, SemanticClass.VEHICLE):
        assert miou_from_confidence(conf, scene_grid, cls) == 1.0


def test_miou_below_threshold_is_zero(scene_grid):
    probs = np.full((len(CLASS_ORDER),) + scene_grid.spec.shape, 0.49)
    conf = ConfidenceGrid(spec=scene_grid.spec, probs=probs, channels=[c.value for c in CLASS_ORDER])
    assert miou_from_confidence(conf, scene_grid, SemanticClass.ROAD) == 0.0


def test_miou_matches_brute_force(rng):
    spec = GridSpec(rows=16, cols=16, resolution=1.0)
    gt = make_grid(spec, rng.integers(0, 3, spec.shape))
    probs = rng.random((len(CLASS_ORDER),) + spec.shape)
    conf = ConfidenceGrid(spec=spec, probs=probs, channels=[c.value for c in CLASS_ORDER])
    pred = probs[SemanticClass.ROAD.code] >= 0.5
    truth = gt.class_layer == SemanticClass.ROAD.code
    inter = sum(1 for r in range(16) for c in range(16) if pred[r, c] and truth[r, c])
    union = sum(1 for r in range(16) for c in range(16) if pred[r, c] or truth[r, c])
    assert miou_from_confidence(conf, gt, SemanticClass.ROAD) == inter / union


def test_occluded_iou_ignores_visible_cells(rng):
    gt = rng.random((8, 8)) < 0.5
    occlusion = block((8, 8), slice(0, 2), slice(0, 5))
    pred = np.where(occlusion, gt, ~gt)
    assert occluded_miou(pred, gt, occlusion) == 1.0


def test_occluded_iou_needs_occlusion():
    with pytest.raises(NoOccludedCells):
        occluded_miou(np.ones((4, 4)), np.ones((4, 4)), np.zeros((4, 4)))


def test_occluded_iou_matches_masked_brute_force():
    occlusion = np.zeros((8, 8), dtype=bool)
    occlusion[2, 1:6] = True
    occlusion[5, 3:8] = True
    gt = block((8, 8), slice(2, 6), slice(2, 5))
    pred = block((8, 8), slice(1, 6), slice(3, 7))
    cells = [(r, c) for r in range(8) for c in range(8) if occlusion[r, c]]
    inter = sum(pred[r, c] and gt[r, c] for r, c in cells)
    union = sum(pred[r, c] or gt[r, c] for r, c in cells)
    assert occlusion.sum() == 10
    assert occluded_miou(pred, gt, occlusion) == inter / union


# ----------------- lane instances -----------------
def test_lane_instances_from_ids():
    assert extract_lane_instances(np.zeros((6, 6), dtype=np.uint16)) == []
    ids = np.zeros((6, 6), dtype=np.uint16)
    ids[0, :3] = 1
    ids[3, :] = 2
    instances = extract_lane_instances(ids)
    assert [i.lane_id for i in instances] == [1, 2]
    assert [int(i.mask.sum()) for i in instances] == [3, 6]


def test_lane_confidence_is_mean_over_mask():
    ids = np.zeros((10, 10), dtype=np.uint16)
    ids[:4, :] = 3
    [instance] = extract_lane_instances(ids, np.full((10, 10), 0.8))
    assert instance.lane_id == 3
    assert instance.confidence == pytest.approx(0.8)


def test_identical_lane_is_detected():
    mask = block((10, 10), slice(0, 10), slice(3, 6))
    assert lane_detection_score([lane(mask)], [lane(mask)], 0.5) == (1.0, 1.0)


def test_lane_below_threshold_is_missed():
    gt = block((10, 10), slice(0, 1), slice(0, 10))
    pred = block((10, 10), slice(0, 1), slice(0, 6))
    assert iou(pred, gt) == pytest.approx(0.6)
    ap, recall = lane_detection_score([lane(pred)], [lane(gt)], 0.7)
    assert (ap, recall) == (0.0, 0.0)


def test_duplicate_detection_is_a_false_positive():
    ious = np.array([[0.8, 0.0], [0.75, 0.1]])
    ap, recall, curve = score_matches([0.9, 0.8], ious, 2, 0.5)
    assert ap == pytest.approx(0.5)
    assert recall == pytest.approx(0.5)
    np.testing.assert_allclose(curve.precision, [1.0, 0.5])


def test_lane_score_needs_ground_truth():
    with pytest.raises(NoGroundTruth):
        lane_detection_score([lane(np.ones((2, 2), bool))], [], 0.5)


def test_lane_score_rejects_threshold_outside_unit_interval():
    mask = np.ones((2, 2), bool)
    with pytest.raises(ValueError):
        lane_detection_score([lane(mask)], [lane(mask)], 1.0)


def test_pooled_predictions_only_match_their_own_frame():
    mask = block((6, 6), slice(0, 6), slice(0, 2))
    other = block((6, 6), slice(0, 6), slice(4, 6))
    frames = [([lane(mask, 0.9)], [lane(other)]), ([], [lane(mask)])]
    assert pooled_lane_detection(frames, 0.5) == (0.0, 0.0)
    frames = [([lane(mask, 0.9)], [lane(mask)]), ([lane(other, 0.4)], [lane(other)])]
    assert pooled_lane_detection(frames, 0.5) == (1.0, 1.0)


# ----------------- frames and sequences -----------------
def test_perfect_prediction_scores_one(scene_grid):
    frame = evaluate_frame(ConfidenceGrid.one_hot(scene_grid), scene_grid)
    for name in EVAL_CHANNELS:
        assert frame.iou[name] == 1.0
        assert frame.ap[name] == pytest.approx(1.0)
    assert frame.occluded_iou["road"] == 1.0
    assert [l.lane_id for l in frame.pred_lanes] == [1, 2]


def test_empty_prediction_scores_zero(scene_grid):
    probs = np.zeros((len(CLASS_ORDER),) + scene_grid.spec.shape)
    conf = ConfidenceGrid(spec=scene_grid.spec, probs=probs, channels=[c.value for c in CLASS_ORDER])
    frame = evaluate_frame(conf, scene_grid)
    assert all(frame.iou[name] == 0.0 for name in EVAL_CHANNELS)
    assert frame.pred_lanes == []


def test_absent_classes_are_missing_not_zero(small_spec):
    gt = make_grid(small_spec, np.full(small_spec.shape, SemanticClass.ROAD.code))
    frame = evaluate_frame(ConfidenceGrid.one_hot(gt), gt)
    assert frame.iou["vehicle"] is None
    assert frame.ap["crosswalk"] is None
    assert frame.occluded_iou["road"] is None
    assert frame.iou["road"] == 1.0


def test_ego_lane_confidence_uses_lane_ids(scene_grid):
    conf = ConfidenceGrid.one_hot(scene_grid)
    ego = channel_confidence(conf, "ego_lane")
    np.testing.assert_array_equal(ego > 0, scene_grid.lane_id_layer == 1)


def test_frame_spec_mismatch(scene_grid):
    other = LabelGrid.empty(GridSpec(rows=8, cols=8, resolution=0.5))
    with pytest.raises(ShapeMismatch):
        evaluate_frame(ConfidenceGrid.one_hot(other), scene_grid)


def test_sequence_report_counts_excluded_frames(scene_grid, small_spec):
    road_only = make_grid(small_spec, np.full(small_spec.shape, SemanticClass.ROAD.code))
    pairs = [(ConfidenceGrid.one_hot(g), g) for g in (scene_grid, road_only)]
    report = evaluate_sequence(pairs, sequence_id="seq")
    assert report.frame_count == 2
    assert report.classes["vehicle"].iou == 1.0
    assert report.classes["vehicle"].iou_excluded == 1
    assert report.miou == 1.0
    lm = report.lane_metrics(0.5)
    assert (lm.ap, lm.recall, lm.ground_truth) == (1.0, 1.0, 2)


def test_sequence_results_do_not_depend_on_job_count(scene_grid, rng):
    pairs = []
    for _ in range(3):
        noise = rng.random((len(CLASS_ORDER),) + scene_grid.spec.shape)
        probs = 0.6 * ConfidenceGrid.one_hot(scene_grid).probs + 0.4 * noise
        conf = ConfidenceGrid(
            spec=scene_grid.spec, probs=probs, channels=[c.value for c in CLASS_ORDER],
            lane_id_layer=scene_grid.lane_id_layer,
        )
        pairs.append((conf, scene_grid))
    serial = evaluate_sequence(pairs, jobs=1)
    parallel = evaluate_sequence(pairs, jobs=2)
    assert serial.model_dump() == parallel.model_dump()


def test_sequence_means_match_per_frame_oracle(scene_grid, rng):
    settings = MetricSettings()
    pairs = []
    for _ in range(4):
        probs = rng.random((len(CLASS_ORDER),) + scene_grid.spec.shape)
        pairs.append((ConfidenceGrid(spec=scene_grid.spec, probs=probs, channels=[c.value for c in CLASS_ORDER]), scene_grid))
    report = evaluate_sequence(pairs, settings)
    frames = [evaluate_frame(p, g, settings) for p, g in pairs]
    for name in ("road", "vehicle", "sidewalk"):
        assert report.classes[name].iou == pytest.approx(np.mean([f.iou[name] for f in frames]), abs=1e-9)
        assert report.classes[name].ap == pytest.approx(np.mean([f.ap[name] for f in frames]), abs=1e-9)


# ----------------- brute-force oracles -----------------
def brute_force_iou(pred, gt, cells):
    inter = sum(1 for r, c in cells if pred[r, c] and gt[r, c])
    union = sum(1 for r, c in cells if pred[r, c] or gt[r, c])
    return 1.0 if union == 0 else inter / union


def brute_force_ap(conf, gt):
    """All-point AP with one precision step per confidence level."""
    ranked = sorted(zip(conf.ravel().tolist(), gt.ravel().tolist()), key=lambda cell: -cell[0])
    positives = sum(hit for _, hit in ranked)
    ap, tp, previous, i = 0.0, 0, 0.0, 0
    while i < len(ranked):
        j = i
        while j < len(ranked) and ranked[j][0] == ranked[i][0]:
            tp += ranked[j][1]
            j += 1
        recall = tp / positives
        ap += (recall - previous) * (tp / j)
        previous, i = recall, j
    return ap


@pytest.mark.parametrize("seed", range(200))
def test_cell_metrics_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    shape = (32, 32)
    gt = rng.random(shape) < rng.uniform(0.05, 0.6)
    gt[rng.integers(32), rng.integers(32)] = True
    conf = np.round(rng.random(shape), 2)
    pred = conf >= 0.5
    occlusion = rng.random(shape) < 0.3
    occlusion[0, 0] = True

    everywhere = [(r, c) for r in range(32) for c in range(32)]
    occluded = [(r, c) for r, c in everywhere if occlusion[r, c]]
    assert iou(pred, gt) == pytest.approx(brute_force_iou(pred, gt, everywhere), abs=1e-9)
    assert average_precision(conf, gt) == pytest.approx(brute_force_ap(conf, gt), abs=1e-9)
    assert occluded_miou(pred, gt, occlusion) == pytest.approx(brute_force_iou(pred, gt, occluded), abs=1e-9)


def separated_lanes(seed):
    """Vertical ground-truth strips 4 columns apart; predictions stay within a column of their strip."""
    rng = np.random.default_rng(seed)
    shape = (32, 64)
    gts, preds, sources = [], [], []
    col = 2
    while col + 6 < shape[1] - 2:
        width = int(rng.integers(3, 7))
        gts.append(lane(block(shape, slice(0, 32), slice(col, col + width)), lane_id=len(gts) + 1))
        for _ in range(int(rng.integers(0, 3))):
            lo, hi = col + int(rng.integers(-1, 2)), col + width + int(rng.integers(-1, 2))
            rows = slice(int(rng.integers(0, 12)), int(rng.integers(20, 33)))
            preds.append(lane(block(shape, rows, slice(lo, hi)), confidence=float(rng.random()), lane_id=len(preds) + 1))
            sources.append(len(gts) - 1)
        col += width + 4
    return preds, gts, sources


@pytest.mark.parametrize("seed", range(50))
def test_recall_never_rises_with_the_iou_threshold(seed):
    preds, gts, sources = separated_lanes(seed)
    best = np.zeros(len(gts))
    for p, g in zip(preds, sources):
        best[g] = max(best[g], iou(p.mask, gts[g].mask))

    recalls = []
    for threshold in (0.3, 0.5, 0.7, 0.9):
        _, recall = lane_detection_score(preds, gts, threshold)
        assert recall == pytest.approx(np.mean(best > threshold))
        recalls.append(recall)
    assert all(b <= a for a, b in zip(recalls, recalls[1:]))
