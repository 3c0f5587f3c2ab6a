# bev/metrics.py
"""Layout evaluation: cell-level IoU/AP, occluded IoU and instance-level lane detection."""
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging
import math
import numpy as np

from models.grid import ConfidenceGrid, LabelGrid, SemanticClass
from models.lanes import LaneInstance
from models.report import (
    EVAL_CHANNELS, ClassMetrics, EvalReport, FrameError, FrameMetrics,
    LaneDetectionMetrics, PrCurve,
)
from models.settings import Interpolation, MetricSettings, TieHandling
from utils.errors import (
    EmptyGroundTruth, MissingMetric, NoGroundTruth, NoOccludedCells, ShapeMismatch,
)
from utils.parallel import map_frames

logger = logging.getLogger(__name__)

CHANNEL_CLASSES: Dict[str, Tuple[SemanticClass, ...]] = {
    "vehicle": (SemanticClass.VEHICLE,),
    "road": (SemanticClass.ROAD, SemanticClass.LANE, SemanticClass.CROSSWALK, SemanticClass.OTHER_ROAD),
    "sidewalk": (SemanticClass.SIDEWALK,),
    "crosswalk": (SemanticClass.CROSSWALK,),
    "ego_lane": (SemanticClass.LANE,),
    "lane": (SemanticClass.LANE,),
}


def _same_shape(a: np.ndarray, b: np.ndarray, what: str = "rasters"):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{what} differ in shape: {a.shape} vs {b.shape}")


# ==============================
# CELL-LEVEL METRICS
# ==============================
def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    _same_shape(pred, gt)
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def pr_curve(conf: np.ndarray, gt: np.ndarray, tie_handling: TieHandling = TieHandling.GROUP) -> PrCurve:
    """Sweep cells by descending confidence; with grouping, equal confidences form one step."""
    conf, gt = np.asarray(conf, dtype=np.float64).ravel(), np.asarray(gt, dtype=bool).ravel()
    n_pos = int(gt.sum())
    if n_pos == 0:
        raise EmptyGroundTruth("no positive ground-truth cells")

    order = np.argsort(-conf, kind="stable")
    conf, hits = conf[order], gt[order]
    tp = np.cumsum(hits)
    ranks = np.arange(1, conf.size + 1)
    if tie_handling == TieHandling.GROUP:
        ends = np.nonzero(np.append(conf[1:] != conf[:-1], True))[0]
    else:
        ends = np.arange(conf.size)
    return PrCurve(precision=tp[ends] / ranks[ends], recall=tp[ends] / n_pos, thresholds=conf[ends])


def ap_from_curve(curve: PrCurve, interpolation: Interpolation = Interpolation.ALL_POINT) -> float:
    if len(curve) == 0:
        return 0.0
    if interpolation == Interpolation.ELEVEN_POINT:
        levels = []
        for r in np.linspace(0.0, 1.0, 11):
            reached = curve.precision[curve.recall >= r - 1e-12]
            levels.append(float(reached.max()) if reached.size else 0.0)
        return math.fsum(levels) / 11.0
    steps = np.diff(np.concatenate([[0.0], curve.recall]))
    return float(min(1.0, max(0.0, math.fsum(steps * curve.precision))))


def average_precision(
    conf: np.ndarray,
    gt: np.ndarray,
    interpolation: Interpolation = Interpolation.ALL_POINT,
    tie_handling: TieHandling = TieHandling.GROUP,
) -> float:
    conf, gt = np.asarray(conf, dtype=np.float64), np.asarray(gt, dtype=bool)
    _same_shape(conf, gt)
    return ap_from_curve(pr_curve(conf, gt, tie_handling), interpolation)


def miou_from_confidence(conf: ConfidenceGrid, gt: LabelGrid, cls: SemanticClass, threshold: float = 0.5) -> float:
    if conf.spec != gt.spec:
        raise ShapeMismatch("prediction and ground truth use different grid specs")
    pred = conf.channel(cls) >= threshold
    return iou(pred, gt.class_layer == cls.code)


def occluded_miou(pred: np.ndarray, gt: np.ndarray, occlusion: np.ndarray) -> float:
    pred, gt, occlusion = (np.asarray(a, dtype=bool) for a in (pred, gt, occlusion))
    _same_shape(pred, gt)
    _same_shape(pred, occlusion, "prediction and occlusion mask")
    if not occlusion.any():
        raise NoOccludedCells("occlusion mask is empty")
    return iou(pred[occlusion], gt[occlusion])


# ==============================
# LANE INSTANCES
# ==============================
def extract_lane_instances(
    lane_ids: np.ndarray,
    conf: Optional[Union[ConfidenceGrid, np.ndarray]] = None,
) -> List[LaneInstance]:
    lane_ids = np.asarray(lane_ids)
    if isinstance(conf, ConfidenceGrid):
        conf = conf.channel(SemanticClass.LANE) if conf.has_channel(SemanticClass.LANE) else None
    if conf is not None:
        conf = np.asarray(conf, dtype=np.float64)
        _same_shape(lane_ids, conf, "lane ids and confidence")

    instances = []
    for lane_id in np.unique(lane_ids):
        if lane_id == 0:
            continue
        mask = lane_ids == lane_id
        score = float(np.clip(conf[mask].mean(), 0.0, 1.0)) if conf is not None else 1.0
        instances.append(LaneInstance(lane_id=int(lane_id), side=0, mask=mask, confidence=score))
    return instances


def mask_iou_matrix(preds: Sequence[LaneInstance], gts: Sequence[LaneInstance]) -> np.ndarray:
    out = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            out[i, j] = iou(p.mask, g.mask)
    return out


def score_matches(
    confidences: Sequence[float],
    iou_matrix: np.ndarray,
    n_gt: int,
    threshold: float,
    interpolation: Interpolation = Interpolation.ALL_POINT,
) -> Tuple[float, float, PrCurve]:
    """Greedy matching by descending confidence; returns (AP, recall, PR curve)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"IoU threshold must be in (0, 1), got {threshold}")
    if n_gt <= 0:
        raise NoGroundTruth("no ground-truth lanes")
    confidences = np.asarray(confidences, dtype=np.float64)
    iou_matrix = np.asarray(iou_matrix, dtype=np.float64).reshape(confidences.size, n_gt)

    order = np.argsort(-confidences, kind="stable")
    matched = np.zeros(n_gt, dtype=bool)
    hits = np.zeros(order.size, dtype=bool)
    for rank, p in enumerate(order):
        candidates = np.where(matched, -1.0, iou_matrix[p])
        best = int(np.argmax(candidates))
        if candidates[best] > threshold:
            matched[best] = True
            hits[rank] = True

    tp = np.cumsum(hits)
    curve = PrCurve(
        precision=tp / np.arange(1, order.size + 1),
        recall=tp / n_gt,
        thresholds=confidences[order],
    )
    return ap_from_curve(curve, interpolation), float(matched.sum()) / n_gt, curve


def lane_detection_score(
    preds: Sequence[LaneInstance],
    gts: Sequence[LaneInstance],
    iou_threshold: float,
    interpolation: Interpolation = Interpolation.ALL_POINT,
) -> Tuple[float, float]:
    ap, recall, _ = score_matches(
        [p.confidence for p in preds], mask_iou_matrix(preds, gts), len(gts), iou_threshold, interpolation
    )
    return ap, recall


def pooled_lane_detection(
    frames: Sequence[Tuple[Sequence[LaneInstance], Sequence[LaneInstance]]],
    iou_threshold: float,
    interpolation: Interpolation = Interpolation.ALL_POINT,
) -> Tuple[float, float]:
    """Sequence-level AP/recall: predictions only match ground truth of their own frame."""
    confidences: List[float] = []
    blocks = []
    for preds, gts in frames:
        confidences += [p.confidence for p in preds]
        blocks.append(mask_iou_matrix(preds, gts))
    n_pred, n_gt = sum(b.shape[0] for b in blocks), sum(b.shape[1] for b in blocks)
    matrix = np.zeros((n_pred, n_gt))
    r = c = 0
    for b in blocks:
        matrix[r:r + b.shape[0], c:c + b.shape[1]] = b
        r, c = r + b.shape[0], c + b.shape[1]
    ap, recall, _ = score_matches(confidences, matrix, n_gt, iou_threshold, interpolation)
    return ap, recall


# ==============================
# EVALUATION CHANNELS
# ==============================
def channel_mask(grid: LabelGrid, name: str) -> np.ndarray:
    if name == "ego_lane":
        return grid.lane_id_layer == 1
    return np.isin(grid.class_layer, [c.code for c in CHANNEL_CLASSES[name]])


def channel_confidence(conf: ConfidenceGrid, name: str) -> np.ndarray:
    total = np.zeros(conf.spec.shape)
    for cls in CHANNEL_CLASSES[name]:
        if conf.has_channel(cls):
            total = total + conf.channel(cls)
    if name == "ego_lane":
        ego = conf.lane_id_layer == 1 if conf.lane_id_layer is not None else np.zeros(conf.spec.shape, dtype=bool)
        total = total * ego
    return np.clip(total, 0.0, 1.0)


def _maybe(fn, *args) -> Optional[float]:
    try:
        return fn(*args)
    except MissingMetric:
        return None


def evaluate_frame(
    pred: ConfidenceGrid,
    gt: LabelGrid,
    settings: MetricSettings = MetricSettings(),
    index: int = 0,
) -> FrameMetrics:
    if pred.spec != gt.spec:
        raise ShapeMismatch(f"frame {index}: prediction grid {pred.spec.shape} vs ground truth {gt.spec.shape}")

    frame = FrameMetrics(index=index)
    occlusion = gt.occlusion_layer
    for name in EVAL_CHANNELS:
        target = channel_mask(gt, name)
        score = channel_confidence(pred, name)
        binary = score >= settings.binarize_threshold
        present = bool(target.any())
        frame.iou[name] = iou(binary, target) if present else None
        frame.ap[name] = (
            average_precision(score, target, settings.interpolation, settings.tie_handling) if present else None
        )
        frame.occluded_iou[name] = (
            _maybe(occluded_miou, binary, target, occlusion) if (target & occlusion).any() else None
        )

    pred_ids = pred.lane_id_layer if pred.lane_id_layer is not None else np.zeros(gt.spec.shape, dtype=np.uint16)
    frame.pred_lanes = extract_lane_instances(pred_ids, pred)
    frame.gt_lanes = extract_lane_instances(gt.lane_id_layer)
    return frame


def _mean(values: List[Optional[float]]) -> Tuple[Optional[float], int]:
    present = [v for v in values if v is not None]
    if not present:
        return None, len(values)
    return math.fsum(present) / len(present), len(values) - len(present)


def _evaluate_pair(args) -> FrameMetrics:
    pred, gt, settings, index = args
    return evaluate_frame(pred, gt, settings, index)


def aggregate(
    frames: Sequence[FrameMetrics],
    settings: MetricSettings = MetricSettings(),
    frame_errors: Sequence[FrameError] = (),
    method: str = "prediction",
    sequence_id: Optional[str] = None,
    config: Optional[dict] = None,
) -> EvalReport:
    classes: Dict[str, ClassMetrics] = {}
    for name in EVAL_CHANNELS:
        iou_v, iou_x = _mean([f.iou.get(name) for f in frames])
        ap_v, ap_x = _mean([f.ap.get(name) for f in frames])
        occ_v, occ_x = _mean([f.occluded_iou.get(name) for f in frames])
        classes[name] = ClassMetrics(
            iou=iou_v, ap=ap_v, occluded_iou=occ_v,
            iou_excluded=iou_x, ap_excluded=ap_x, occluded_excluded=occ_x,
        )

    lane_metrics = []
    pairs = [(f.pred_lanes, f.gt_lanes) for f in frames]
    for threshold in settings.iou_thresholds:
        try:
            ap, recall = pooled_lane_detection(pairs, threshold, settings.interpolation)
        except NoGroundTruth:
            ap = recall = None
        lane_metrics.append(LaneDetectionMetrics(
            threshold=threshold,
            ap=ap,
            recall=recall,
            predictions=sum(len(p) for p, _ in pairs),
            ground_truth=sum(len(g) for _, g in pairs),
        ))

    return EvalReport(
        method=method,
        sequence_id=sequence_id,
        frame_count=len(frames),
        classes=classes,
        miou=_mean([c.iou for c in classes.values()])[0],
        map=_mean([c.ap for c in classes.values()])[0],
        occluded_miou=_mean([c.occluded_iou for c in classes.values()])[0],
        lane_detection=lane_metrics,
        frame_errors=list(frame_errors),
        config=config or {},
    )


def evaluate_sequence(
    pairs: Sequence[Tuple[ConfidenceGrid, LabelGrid]],
    settings: MetricSettings = MetricSettings(),
    jobs: int = 1,
    frame_errors: Sequence[FrameError] = (),
    method: str = "prediction",
    sequence_id: Optional[str] = None,
    config: Optional[dict] = None,
    indices: Optional[Sequence[int]] = None,
) -> EvalReport:
    indices = list(range(len(pairs))) if indices is None else list(indices)
    work = [(pred, gt, settings, i) for (pred, gt), i in zip(pairs, indices)]
    frames = map_frames(_evaluate_pair, work, jobs=jobs, desc="eval")
    report = aggregate(frames, settings, frame_errors, method, sequence_id, config)
    logger.info(f"✅ Evaluated {len(frames)} frames: mIoU={report.miou} mAP={report.map}")
    return report
