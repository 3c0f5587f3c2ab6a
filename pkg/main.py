from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from contextlib import asynccontextmanager
import logging
import uvicorn

from config import settings, setup_logging
from routes import evaluation, synth
from utils.errors import BevBenchError

logger = logging.getLogger(__name__)

VERSION = "1.0.0"


# ---------------------------------------------------
# Lifespan (Startup & Shutdown)
# ---------------------------------------------------
@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info("🚀 Starting bevbench service...")
    print_routes(app)
    yield
    logger.info("👋 Shutting down bevbench service...")


# ---------------------------------------------------
# App Initialization
# ---------------------------------------------------
app = FastAPI(
    title="bevbench",
    description="Evaluation and temporal-consistency scoring of bird's-eye-view layouts",
    version=VERSION,
    lifespan=lifespan,
)

# ---------------------------------------------------
# Routers
# ---------------------------------------------------
app.include_router(evaluation.router)
app.include_router(synth.router)


# ---------------------------------------------------
# Errors raised while parsing request bodies
# ---------------------------------------------------
@app.exception_handler(BevBenchError)
async def bevbench_error_handler(request: Request, exc: BevBenchError):
    logger.error(f"❌ {request.url.path}: {type(exc).__name__}: {exc}")
    return JSONResponse(status_code=400, content={"detail": f"{type(exc).__name__}: {exc}"})


# ---------------------------------------------------
# Root Endpoint
# ---------------------------------------------------
@app.get("/")
async def root():
    return {
        "message": "bevbench API",
        "version": VERSION,
        "docs": "/docs",
        "status": "running",
    }


# ---------------------------------------------------
# Health Check
# ---------------------------------------------------
@app.get("/health")
async def health_check():
    return {"status": "healthy", "version": VERSION}


# ---------------------------------------------------
# Utility: Print Routes
# ---------------------------------------------------
def print_routes(app: FastAPI):
    logger.info("📋 REGISTERED ROUTES")
    for route in app.routes:
        if hasattr(route, "methods"):
            logger.info(f"{', '.join(sorted(route.methods)):15} {route.path}")


# ---------------------------------------------------
# Run Server (Local)
# ---------------------------------------------------
if __name__ == "__main__":
    setup_logging()
    uvicorn.run(
        "main:app",
        host=settings.HOST,
        port=settings.PORT,
        log_level=settings.LOG_LEVEL if settings.LOG_LEVEL != "warn" else "warning",
    )
