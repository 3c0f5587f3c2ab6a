# routes/synth.py
from fastapi import APIRouter, HTTPException
import logging

from bev.metrics import evaluate_sequence
from bev.synth import RoadModel, ground_truth_grid, simulate_prediction
from models.api import PredictionScoreRequest
from models.report import EvalReport
from utils.errors import BevBenchError

router = APIRouter(prefix="/api/synth", tags=["Synthetic scenes"])
logger = logging.getLogger(__name__)


# ----------------- NOISY PREDICTION SCORE -----------------
@router.post("/prediction-score", response_model=EvalReport)
async def prediction_score(request: PredictionScoreRequest):
    """Score simulated predictions of a synthetic scene against its own ground truth."""
    if not 0.0 <= request.noise_level <= 1.0:
        raise HTTPException(status_code=400, detail="noise_level must lie in [0, 1]")
    try:
        road = RoadModel(request.params)
        pairs = []
        for i, pose in enumerate(road.ego_poses()):
            gt = ground_truth_grid(request.params, pose, request.grid, road)
            pred, _ = simulate_prediction(gt, request.noise_level, [request.seed, i])
            pairs.append((pred, gt))
        return evaluate_sequence(
            pairs,
            request.metrics,
            method=f"noise={request.noise_level:g}",
            config={"noise_level": request.noise_level, "seed": request.seed},
        )
    except BevBenchError as e:
        logger.error(f"Prediction scoring rejected: {e}")
        raise HTTPException(status_code=400, detail=f"{type(e).__name__}: {e}")
    except Exception as e:
        logger.error(f"Prediction scoring failed: {e}")
        raise HTTPException(status_code=500, detail="Prediction scoring failed")
