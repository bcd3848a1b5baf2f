from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
import logging
from datetime import datetime
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from src.change_point import kolmogorov_cdf, kolmogorov_pdf, kolmogorov_quantile, kolmogorov_sf, run_test
from src.coordinates import partial_qv
from src.errors import SpdeError
from src.models import CoordinatePath, TestResult
from config import LOG_LEVEL, SPDE_DEFAULT_LEVEL

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

app = FastAPI(
    title="SPDE Change Point",
    description="Kolmogorov distribution lookups and the CUSUM volatility change-point test on coordinate paths of parabolic SPDEs.",
    version="1.0.0"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


class TestRequest(BaseModel):
    __test__ = False

    values: List[float] = Field(..., min_length=3, description="Coordinate path x(t_0), ..., x(t_n) on an equidistant grid")
    level: float = Field(SPDE_DEFAULT_LEVEL, gt=0.0, lt=1.0)
    beta_sq: Optional[float] = Field(None, gt=0.0, description="Normalization; defaults to the total quadratic variation")


@app.get("/")
async def root():
    return {
        "status": "online",
        "message": "SPDE change-point service is running",
        "docs": "/docs",
        "version": "1.0.0"
    }


@app.get("/kolmogorov")
async def kolmogorov(x: float = Query(..., description="Point at which to evaluate the distribution")):
    return {"x": x, "cdf": kolmogorov_cdf(x), "sf": kolmogorov_sf(x), "pdf": kolmogorov_pdf(x)}


@app.get("/kolmogorov/quantile")
async def kolmogorov_quantile_endpoint(p: float = Query(..., description="Probability in (0, 1)")):
    try:
        return {"p": p, "quantile": kolmogorov_quantile(p)}
    except SpdeError as e:
        raise HTTPException(status_code=422, detail=str(e))


@app.post("/test", response_model=TestResult)
async def change_point_test(request: TestRequest):
    try:
        logger.info(f"API request received: change-point test on {len(request.values)} values at level {request.level}")
        n = len(request.values) - 1
        path_ = CoordinatePath(ell=(1,), times=np.arange(n + 1) / n, values=request.values)
        return run_test(partial_qv(path_), request.level, beta_sq=request.beta_sq)
    except SpdeError as e:
        logger.warning(f"Rejected test request: {str(e)}")
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.error(f"Error running change-point test: {str(e)}", exc_info=True)
        raise HTTPException(
            status_code=500,
            detail=f"Failed to run change-point test: {str(e)}"
        )


@app.get("/health")
async def health_check():
    return {"status": "healthy", "timestamp": datetime.now().isoformat()}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run("app:app", host="0.0.0.0", port=8000, reload=True)
