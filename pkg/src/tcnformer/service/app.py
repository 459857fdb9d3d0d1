"""FastAPI application exposing the forecasting operations.

Domain failures (anything deriving from TcnformerError) map to HTTP 400
with a one-line ``detail`` naming the error type; genuine bugs still
surface as 500s.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import RunConfig, apply_overrides
from ..errors import TcnformerError
from ..runs import run_ablate, run_evaluate, run_fetch, run_forecast, run_train
from .schemas import (
    AblateResponse,
    EvaluateResponse,
    FetchResponse,
    ForecastResponse,
    HealthResponse,
    RunRequest,
    TrainResponse,
)

SERVICE_VERSION = __version__


def _effective_config(request: RunRequest) -> RunConfig:
    overrides = {key: str(value) for key, value in request.config.items()}
    return apply_overrides(RunConfig(), overrides)


def create_app() -> FastAPI:
    app = FastAPI(
        title="tcnformer service",
        version=SERVICE_VERSION,
        description="Short-term wind-speed forecasting runs over HTTP",
    )

    @app.exception_handler(TcnformerError)
    async def domain_error_handler(request: Request, exc: TcnformerError):
        return JSONResponse(
            status_code=400,
            content={"detail": f"{type(exc).__name__}: {exc}"},
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=SERVICE_VERSION)

    @app.post("/fetch", response_model=FetchResponse)
    def fetch(request: RunRequest) -> FetchResponse:
        return FetchResponse(**run_fetch(_effective_config(request)))

    @app.post("/train", response_model=TrainResponse)
    def train(request: RunRequest) -> TrainResponse:
        return TrainResponse(**run_train(_effective_config(request)))

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(request: RunRequest) -> EvaluateResponse:
        return EvaluateResponse(**run_evaluate(_effective_config(request)))

    @app.post("/forecast", response_model=ForecastResponse)
    def forecast(request: RunRequest) -> ForecastResponse:
        return ForecastResponse(**run_forecast(_effective_config(request)))

    @app.post("/ablate", response_model=AblateResponse)
    def ablate(request: RunRequest) -> AblateResponse:
        return AblateResponse(**run_ablate(_effective_config(request)))

    return app
