"""FastAPI service wrapping the pricing engine.

Each endpoint accepts a full RunConfig document and returns a RunResponse
envelope: a JSON-safe report plus named text artifacts (CSV exports). Errors
map to status codes the CLI translates into exit codes: configuration
problems are 400/422, numerical failures 500.
"""

from __future__ import annotations

from typing import Any, Dict

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .config import RunConfig
from .errors import ConfigError, SolverError
from .runners import (
    run_convergence,
    run_hedge_sim,
    run_mc_bound,
    run_price,
    run_surface,
    run_validate,
)


class RunResponse(BaseModel):
    report: Dict[str, Any]
    artifacts: Dict[str, str] = {}


class PriceReport(BaseModel):
    """Typed view of the price report (kept in sync with PricePair.to_report)."""

    model_config = ConfigDict(populate_by_name=True)

    super_price: float = Field(alias="super")
    sub_price: float = Field(alias="sub")
    tau: float
    spot: float
    method: str
    diagnostics: Dict[str, Any]


class HealthResponse(BaseModel):
    status: str
    version: str


def create_app() -> FastAPI:
    app = FastAPI(title="uvol pricing service", version=__version__)

    @app.exception_handler(ConfigError)
    async def _config_error(request: Request, exc: ConfigError):
        return JSONResponse(status_code=400, content={"error": "config", "message": str(exc)})

    @app.exception_handler(SolverError)
    async def _solver_error(request: Request, exc: SolverError):
        return JSONResponse(status_code=500, content={"error": "solver", "message": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    def _run(runner, cfg: RunConfig) -> RunResponse:
        report, artifacts = runner(cfg)
        return RunResponse(report=report, artifacts=artifacts)

    @app.post("/api/price", response_model=RunResponse)
    def price(cfg: RunConfig) -> RunResponse:
        return _run(run_price, cfg)

    @app.post("/api/mc-bound", response_model=RunResponse)
    def mc_bound(cfg: RunConfig) -> RunResponse:
        return _run(run_mc_bound, cfg)

    @app.post("/api/hedge-sim", response_model=RunResponse)
    def hedge_sim(cfg: RunConfig) -> RunResponse:
        return _run(run_hedge_sim, cfg)

    @app.post("/api/validate", response_model=RunResponse)
    def validate(cfg: RunConfig) -> RunResponse:
        return _run(run_validate, cfg)

    @app.post("/api/surface", response_model=RunResponse)
    def surface(cfg: RunConfig) -> RunResponse:
        return _run(run_surface, cfg)

    @app.post("/api/convergence", response_model=RunResponse)
    def convergence(cfg: RunConfig) -> RunResponse:
        return _run(run_convergence, cfg)

    return app
