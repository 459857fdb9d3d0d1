"""Request/response models for the HTTP service.

Every operation takes the same request shape: a flat ``config`` mapping
using exactly the config-file keys (values may be strings or numbers; they
are converted with the same typed parser as the config file).  Responses
mirror the run summaries the orchestration layer returns.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    """Flat config overrides; unknown keys are rejected with a 400."""

    config: dict[str, str | int | float] = Field(
        default_factory=dict,
        description="config-file keys and values; defaults fill the rest",
    )


class HealthResponse(BaseModel):
    status: str
    version: str


class FetchResponse(BaseModel):
    raw_path: str
    canonical_path: str
    meta_path: str
    url: str
    rows: int
    out_dir: str


class TrainResponse(BaseModel):
    run_dir: str
    checkpoint: str
    season: str
    epochs_run: int
    best_epoch: int
    best_val_mse: float
    stopped_early: bool
    test_mae: float
    test_mse: float
    improvement_vs_baseline_pct: float
    files: dict[str, str]


class EvaluateResponse(BaseModel):
    run_dir: str
    season: str
    variant: str
    mae: float
    mse: float
    baseline_mae: float
    improvement_vs_baseline_pct: float
    files: dict[str, str]


class ForecastRow(BaseModel):
    timestamp: str
    ws10m_pred: float


class ForecastResponse(BaseModel):
    run_dir: str
    forecast_csv: str
    horizon: int
    rows: list[ForecastRow]


class ArmSummary(BaseModel):
    variant: str
    mae: float
    mse: float
    improvement_vs_baseline_pct: float


class AblateResponse(BaseModel):
    run_dir: str
    season: str
    arms: list[ArmSummary]
    audit: list[str]
    files: dict[str, str]
