# routes/evaluation.py
from fastapi import APIRouter, HTTPException
import logging

from bev.consistency import score_sequence, sequence_from_predictions
from bev.metrics import evaluate_sequence
from models.api import ConsistencyRequest, EvalRequest
from models.report import EvalReport
from models.sequence import ConsistencyReport, ConsistencyWeights
from models.settings import ToolConfig
from utils.errors import BevBenchError

router = APIRouter(prefix="/api", tags=["Evaluation"])
logger = logging.getLogger(__name__)


# ----------------- EVALUATE PREDICTIONS -----------------
@router.post("/eval", response_model=EvalReport)
async def evaluate(request: EvalRequest):
    try:
        pairs = [
            (frame.prediction.to_grid(request.grid), frame.ground_truth.to_grid(request.grid))
            for frame in request.frames
        ]
        return evaluate_sequence(
            pairs,
            request.metrics,
            method=request.method,
            config={"grid": request.grid.model_dump(), "metrics": request.metrics.model_dump(mode="json")},
        )
    except BevBenchError as e:
        logger.error(f"Evaluation rejected: {e}")
        raise HTTPException(status_code=400, detail=f"{type(e).__name__}: {e}")
    except Exception as e:
        logger.error(f"Evaluation failed: {e}")
        raise HTTPException(status_code=500, detail="Evaluation failed")


# ----------------- TEMPORAL CONSISTENCY -----------------
@router.post("/consistency", response_model=ConsistencyReport)
async def consistency(request: ConsistencyRequest):
    if not request.predictions:
        raise HTTPException(status_code=400, detail="at least one prediction is required")
    try:
        preds = [p.to_grid(request.grid) for p in request.predictions]
        gts = [g.to_grid(request.grid) for g in request.ground_truth] if request.ground_truth else None
        s = request.settings
        return score_sequence(
            sequence_from_predictions(preds),
            ConsistencyWeights(lambda_sup=s.lambda_sup, lambda_short=s.lambda_short, lambda_long=s.lambda_long),
            ground_truth=gts,
            predictions=preds if gts else None,
            epsilon=s.epsilon,
            config={"consistency": s.model_dump()},
        )
    except BevBenchError as e:
        logger.error(f"Consistency scoring rejected: {e}")
        raise HTTPException(status_code=400, detail=f"{type(e).__name__}: {e}")
    except Exception as e:
        logger.error(f"Consistency scoring failed: {e}")
        raise HTTPException(status_code=500, detail="Consistency scoring failed")


# ----------------- DEFAULT CONFIG -----------------
@router.get("/config/defaults")
async def config_defaults():
    return ToolConfig().echo()
