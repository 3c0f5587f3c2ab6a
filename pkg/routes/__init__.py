# routes/__init__.py

from .evaluation import router as evaluation_router
from .synth import router as synth_router

__all__ = [
    "evaluation_router",
    "synth_router",
]
