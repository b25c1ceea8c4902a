import logging
import os
from dataclasses import asdict
from typing import Any, Dict, Optional

from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.responses import JSONResponse

from unraveling_pipeline import __version__
from unraveling_pipeline.dist_core import SeededSampler
from unraveling_pipeline.errors import ResourceGuardError, UnravelingError, http_status_for
from unraveling_pipeline.experiments import REPLICATION_STAGES, build_pipeline
from unraveling_pipeline.helper import resolve_seed
from unraveling_pipeline.limit_model import ETA_VARIANTS, estimate_eta, estimate_pi, estimate_zeta
from unraveling_pipeline.pipeline import load_runtime_config
from unraveling_pipeline.schemas import AnalyzeRequest, RealizationModel, parse_payload
from unraveling_pipeline.stability import analysis_report

# Configure logging
logging.basicConfig(
    level=os.environ.get("LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
)
logger = logging.getLogger("unraveling_api")

app = FastAPI(title="Unraveling API")

LIMIT_QUANTITIES = ("pi", "zeta", "eta")


@app.on_event("startup")
async def startup_event():
    """
    Build every experiment pipeline once so configuration problems surface at boot.
    """
    logger.info("Starting Unraveling API")
    try:
        for experiment in REPLICATION_STAGES:
            pipeline = build_pipeline(experiment)
            stage_names = [stage.__class__.__name__ for stage in pipeline.stages]
            logger.info("Pipeline %s: %s", experiment, ", ".join(stage_names))
    except Exception as e:
        logger.error("Failed to initialize pipelines: %s", str(e))
        logger.exception("Detailed error:")


def _analyze(request: AnalyzeRequest) -> Dict[str, Any]:
    try:
        C = request.realization.to_realization()
        mu = request.matching.to_matching(C.n) if request.matching else None
        return analysis_report(C, mu)
    except UnravelingError as e:
        logger.error("Analysis rejected: %s", str(e))
        raise HTTPException(status_code=http_status_for(e), detail=str(e))


@app.get("/")
async def root():
    """
    Root endpoint providing API information and documentation links.
    """
    return {
        "name": "Unraveling API",
        "version": __version__,
        "description": "Stability, chaos and unraveling analysis for two-period matching markets",
        "documentation": "/docs",
        "healthCheck": "/health",
    }


@app.get("/health")
async def health_check():
    """
    Health check endpoint; builds the experiment pipelines and lists their stages.
    """
    try:
        pipelines = {name: build_pipeline(name) for name in REPLICATION_STAGES}
        return {
            "status": "healthy",
            "pipelines": {
                name: [stage.__class__.__name__ for stage in pipeline.stages]
                for name, pipeline in pipelines.items()
            },
        }
    except Exception as e:
        logger.error("Health check failed: %s", str(e))
        return JSONResponse(status_code=500, content={"status": "unhealthy", "error": str(e)})


@app.post("/analyze")
def analyze_endpoint(request: AnalyzeRequest):
    """
    Chaos verdict for a realization plus the stability verdict of the given early
    matching (everyone waiting when no matching is sent).
    """
    return _analyze(request)


@app.post("/analyze/file")
async def analyze_file_endpoint(file: UploadFile = File(...)):
    """
    Same as /analyze for an uploaded realization .json file.
    """
    ext = os.path.splitext(file.filename or "")[1].lower()
    if ext != ".json":
        raise HTTPException(status_code=415, detail="Unsupported file type. Upload a .json realization.")
    content = await file.read()
    try:
        realization = parse_payload(RealizationModel, content)
    except UnravelingError as e:
        raise HTTPException(status_code=http_status_for(e), detail=str(e))
    return _analyze(AnalyzeRequest(realization=realization))


@app.get("/limit/{quantity}")
def limit_endpoint(
    quantity: str,
    r: int = 1,
    reps: int = 10_000,
    seed: Optional[int] = None,
    variant: str = "symmetric",
):
    """
    One Monte Carlo estimate of π(r), ζ_r or η_r in the exponential-gap limit model.
    """
    if quantity not in LIMIT_QUANTITIES:
        raise HTTPException(status_code=404, detail=f"Unknown quantity {quantity!r}; use one of {LIMIT_QUANTITIES}")
    if variant not in ETA_VARIANTS:
        raise HTTPException(status_code=422, detail=f"variant must be one of {ETA_VARIANTS}")
    runtime = load_runtime_config()
    try:
        if reps > runtime["api_max_reps"]:
            raise ResourceGuardError(f"reps: {reps} exceeds the service limit of {runtime['api_max_reps']}")
        if r > runtime["api_max_r"]:
            raise ResourceGuardError(f"r: {r} exceeds the service limit of {runtime['api_max_r']}")
        sampler = SeededSampler(resolve_seed(seed))
        if quantity == "pi":
            estimate = estimate_pi(r, reps, sampler)
        elif quantity == "zeta":
            estimate = estimate_zeta(r, reps, sampler)
        else:
            estimate = estimate_eta(r, reps, sampler, variant=variant)
    except UnravelingError as e:
        raise HTTPException(status_code=http_status_for(e), detail=str(e))
    return asdict(estimate)


# ---------------------------------------------------------------------------#
#                           DEMO                                             #
# ---------------------------------------------------------------------------#
if __name__ == "__main__":
    """
    Analyse the two-couple chaotic market, then start a development server.
    For production deployment, use the run.py script or uvicorn directly.
    """
    import uvicorn

    demo = AnalyzeRequest(realization=RealizationModel(men=[0.4, 0.6], women=[0.4, 0.6]))
    logger.info("Demo analysis: %s", _analyze(demo))

    logger.info("Starting development server at http://127.0.0.1:8000")
    uvicorn.run(app, host="127.0.0.1", port=8000)
