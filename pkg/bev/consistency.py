# bev/consistency.py
"""Temporal scores over layout sequences: supervised deviation, short- and long-range consistency."""
from typing import List, Optional, Sequence, Tuple
import logging
import math
import numpy as np

from bev.raster import cell_centers, cells_of
from models.geometry import Pose
from models.grid import CLASS_ORDER, ConfidenceGrid, LabelGrid, SemanticClass
from models.sequence import (
    ConsistencyReport, ConsistencyWeights, LayoutSequence, SupervisedPair, Target,
)
from utils.errors import SequenceTooShort, ShapeMismatch

logger = logging.getLogger(__name__)

EPSILON = 1e-7
STATIC_CHANNELS = tuple(c.value for c in CLASS_ORDER if c != SemanticClass.VEHICLE)
DYNAMIC_CHANNEL = SemanticClass.VEHICLE.value


# ==============================
# CROSS-ENTROPY
# ==============================
def _target_probs(pred: ConfidenceGrid, target: Target) -> np.ndarray:
    if isinstance(target, LabelGrid):
        if target.spec != pred.spec:
            raise ShapeMismatch("prediction and target use different grid specs")
        return np.stack([target.class_layer == SemanticClass(c).code for c in pred.channels]).astype(np.float64)
    if target.spec != pred.spec or target.channels != pred.channels:
        raise ShapeMismatch(f"channels {pred.channels} vs {target.channels} or grid specs differ")
    return target.probs


def xent(pred: ConfidenceGrid, target: Target, epsilon: float = EPSILON, valid: Optional[np.ndarray] = None) -> float:
    """Mean per-cell cross-entropy; single-channel grids are scored as binary."""
    t = _target_probs(pred, target)
    p = np.clip(pred.probs, epsilon, 1.0 - epsilon)
    if p.shape[0] == 1:
        cell = -(t[0] * np.log(p[0]) + (1.0 - t[0]) * np.log(1.0 - p[0]))
    else:
        cell = -(t * np.log(p)).sum(axis=0)
    if valid is not None:
        cell = cell[np.asarray(valid, dtype=bool)]
    if cell.size == 0:
        return 0.0
    return math.fsum(cell.ravel()) / cell.size


def sup_loss(batch: Sequence[SupervisedPair], epsilon: float = EPSILON) -> float:
    return math.fsum(
        xent(item.static_pred, item.static_target, epsilon) + xent(item.dynamic_pred, item.dynamic_target, epsilon)
        for item in batch
    )


# ==============================
# STATIC / DYNAMIC SPLIT
# ==============================
def split_layout(conf: ConfidenceGrid) -> Tuple[ConfidenceGrid, ConfidenceGrid]:
    """Static layout (non-vehicle channels, renormalized) and dynamic layout (vehicle channel).

    Vehicle probability is added to road in the static layout: the ground under a vehicle is road.
    """
    static_channels = [c for c in conf.channels if c != DYNAMIC_CHANNEL]
    dynamic = conf.channel(DYNAMIC_CHANNEL) if conf.has_channel(DYNAMIC_CHANNEL) else np.zeros(conf.spec.shape)
    static = np.stack([conf.channel(c) for c in static_channels])
    if SemanticClass.ROAD.value in static_channels:
        static[static_channels.index(SemanticClass.ROAD.value)] += dynamic
    total = static.sum(axis=0)
    static = np.where(total > 0, static / np.where(total > 0, total, 1.0), 1.0 / len(static_channels))
    return (
        ConfidenceGrid(spec=conf.spec, probs=np.clip(static, 0.0, 1.0), channels=tuple(static_channels), lane_id_layer=conf.lane_id_layer),
        ConfidenceGrid(spec=conf.spec, probs=dynamic[None], channels=(DYNAMIC_CHANNEL,)),
    )


def static_target(grid: LabelGrid) -> ConfidenceGrid:
    classes = np.where(grid.class_layer == SemanticClass.VEHICLE.code, SemanticClass.ROAD.code, grid.class_layer)
    probs = np.stack([classes == SemanticClass(c).code for c in STATIC_CHANNELS]).astype(np.float64)
    return ConfidenceGrid(spec=grid.spec, probs=probs, channels=STATIC_CHANNELS, normalized=True)


def dynamic_target(grid: LabelGrid) -> ConfidenceGrid:
    vehicle = (grid.class_layer == SemanticClass.VEHICLE.code).astype(np.float64)
    return ConfidenceGrid(spec=grid.spec, probs=vehicle[None], channels=(DYNAMIC_CHANNEL,))


def supervised_pair(pred: ConfidenceGrid, gt: LabelGrid) -> SupervisedPair:
    static, dynamic = split_layout(pred)
    return SupervisedPair(
        static_pred=static, static_target=static_target(gt),
        dynamic_pred=dynamic, dynamic_target=dynamic_target(gt),
    )


# ==============================
# POSE WARP
# ==============================
def warp_to(grid: ConfidenceGrid, source: Pose, target: Pose) -> Tuple[ConfidenceGrid, np.ndarray]:
    """Resample a grid from the source frame into the target frame (nearest cell).

    Returns the warped grid and the mask of target cells that fall inside the source extent.
    """
    spec = grid.spec
    lateral, forward = cell_centers(spec)
    ground = np.stack([lateral.ravel(), np.zeros(lateral.size), forward.ravel()], axis=1)
    in_source = source.inverse().compose(target).apply(ground)
    rows, cols, valid = cells_of(in_source[:, 0], in_source[:, 2], spec)

    n = grid.probs.shape[0]
    flat = np.full((n, lateral.size), 1.0 / n)
    flat[:, valid] = grid.probs[:, rows[valid], cols[valid]]
    warped = ConfidenceGrid(spec=spec, probs=flat.reshape((n,) + spec.shape), channels=grid.channels)
    return warped, valid.reshape(spec.shape)


# ==============================
# SEQUENCE TERMS
# ==============================
def short_pairs(seqlen: int) -> List[Tuple[int, int]]:
    return [(j, j + 1) for j in range(seqlen - 1)]


def long_pairs(seqlen: int) -> List[Tuple[int, int]]:
    return [(j, k) for j in range(seqlen - 1) for k in range(j + 2, seqlen)]


def _pair_term(seq: LayoutSequence, j: int, k: int, epsilon: float, warp: bool) -> float:
    total = 0.0
    for stream in (0, 1):
        pred, target = seq.frames[j][stream], seq.frames[k][stream]
        valid = None
        if warp:
            if seq.poses is None:
                raise ValueError("warp mode needs per-frame poses")
            target, valid = warp_to(target, seq.poses[k], seq.poses[j])
        total += xent(pred, target, epsilon, valid)
    return total


def _sum_pairs(seq: LayoutSequence, pairs, epsilon: float, warp: bool) -> float:
    return math.fsum(_pair_term(seq, j, k, epsilon, warp) for j, k in pairs)


def short_consistency(seq: LayoutSequence, epsilon: float = EPSILON, warp: bool = False) -> float:
    if len(seq) < 2:
        raise SequenceTooShort(f"short-range consistency needs 2 frames, got {len(seq)}")
    return _sum_pairs(seq, short_pairs(len(seq)), epsilon, warp)


def long_consistency(seq: LayoutSequence, epsilon: float = EPSILON, warp: bool = False) -> float:
    if len(seq) < 3:
        raise SequenceTooShort(f"long-range consistency needs 3 frames, got {len(seq)}")
    return _sum_pairs(seq, long_pairs(len(seq)), epsilon, warp)


def total_score(sup: float, short: float, long: float, w: ConsistencyWeights = ConsistencyWeights()) -> float:
    return w.lambda_sup * sup + w.lambda_short * short + w.lambda_long * long


def score_sequence(
    seq: LayoutSequence,
    weights: ConsistencyWeights = ConsistencyWeights(),
    ground_truth: Optional[Sequence[LabelGrid]] = None,
    predictions: Optional[Sequence[ConfidenceGrid]] = None,
    epsilon: float = EPSILON,
    warp: bool = False,
    config: Optional[dict] = None,
) -> ConsistencyReport:
    """All scores for one sequence; terms that need missing inputs are omitted (None)."""
    sup = None
    if ground_truth is not None and predictions is not None:
        if len(ground_truth) != len(predictions):
            raise ShapeMismatch(f"{len(predictions)} predictions for {len(ground_truth)} ground-truth grids")
        sup = sup_loss([supervised_pair(p, g) for p, g in zip(predictions, ground_truth)], epsilon)

    n = len(seq)
    short = short_consistency(seq, epsilon, warp) if n >= 2 else None
    long = long_consistency(seq, epsilon, warp) if n >= 3 else None
    total = total_score(sup or 0.0, short or 0.0, long or 0.0, weights)
    logger.info(f"✅ Consistency over {n} frames: sup={sup} short={short} long={long} total={total:.6f}")
    return ConsistencyReport(
        seqlen=n, sup=sup, short=short, long=long, total=total,
        short_pairs=len(short_pairs(n)), long_pairs=len(long_pairs(n)),
        warp=warp, weights=weights, config=config or {},
    )


def sequence_from_predictions(preds: Sequence[ConfidenceGrid], poses: Optional[Sequence[Pose]] = None) -> LayoutSequence:
    return LayoutSequence(frames=[split_layout(p) for p in preds], poses=list(poses) if poses is not None else None)
