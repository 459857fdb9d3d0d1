"""Error metrics, improvement percentages, reports, and ablation harness.

All reported MAE/MSE values are computed on inverse-scaled series, i.e. in
physical m/s and (m/s)^2.  The improvement percentage is the symmetric
percent difference 200*(baseline - model)/(baseline + model).

The ablation harness retrains three model variants from scratch under one
seed and config: the full model, one with the windowed-causal attention
swapped for unmasked global attention, and one with the external-memory
reader swapped likewise.  A structural audit of parameter names verifies
each substitution touched only the intended sub-layer.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, fields, replace

import numpy as np

from .autodiff import Tensor
from .data import SeasonDataset, apply_minmax
from .errors import ContractError, UndefinedImprovementError
from .model import ModelConfig, Tcnformer
from .training import TrainConfig, TrainResult, train_model

VARIANTS = ("full", "no-ctmsa", "no-tea")

COMPARISON_COLUMNS = ("variant", "season", "mae", "mse", "improvement_vs_baseline_pct")
PER_STEP_COLUMNS = ("variant", "season", "step", "mae")


# ------------------------------------------------------------------- metrics


def _check_pair(y, y_hat):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise ContractError("metrics need at least one sample")
    if y.size != y_hat.size:
        raise ContractError(
            f"metric inputs differ in length: {y.size} vs {y_hat.size}"
        )
    return y, y_hat


def mae(y, y_hat) -> float:
    """Mean absolute error."""
    y, y_hat = _check_pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def mse(y, y_hat) -> float:
    """Mean squared error."""
    y, y_hat = _check_pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def relative_improvement(baseline_metric: float, model_metric: float) -> float:
    """Symmetric percent difference: 200*(b - m)/(b + m).

    Positive when the model beats the baseline.  Undefined when the two
    metrics sum to zero (or a negative value, which no error metric can
    produce legitimately).
    """
    b = float(baseline_metric)
    m = float(model_metric)
    if b + m <= 0.0:
        raise UndefinedImprovementError(
            f"improvement undefined for baseline {b} and model {m}: "
            "metrics must sum to a positive value"
        )
    return 200.0 * (b - m) / (b + m)


def persistence_baseline(window_input, horizon: int) -> np.ndarray:
    """Naive forecast: repeat the last observed value `horizon` times."""
    values = np.asarray(window_input, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ContractError("persistence baseline needs a nonempty input window")
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    return np.full(horizon, values[-1], dtype=np.float64)


# ------------------------------------------------------------------- reports


@dataclass(frozen=True)
class RunReport:
    """One evaluated forecast window, in physical units (m/s)."""

    season: str
    variant: str
    mae: float
    mse: float
    per_step_abs_error: np.ndarray  # [horizon]
    forecast: np.ndarray            # [horizon], m/s
    truth: np.ndarray               # [horizon], m/s
    baseline_mae: float             # persistence baseline, m/s
    improvement_vs_baseline_pct: float  # NaN when undefined
    config_fingerprint: str


def config_fingerprint(model_cfg: ModelConfig, train_cfg: TrainConfig) -> str:
    """Short stable digest of every hyperparameter EXCEPT the encoder
    sub-layer variant fields, so ablation arms share one fingerprint."""
    lines = []
    for f in fields(model_cfg):
        if f.name in ("sublayer1", "sublayer2"):
            continue
        lines.append(f"model.{f.name}={getattr(model_cfg, f.name)!r}")
    for f in fields(train_cfg):
        lines.append(f"train.{f.name}={getattr(train_cfg, f.name)!r}")
    text = "\n".join(sorted(lines))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def evaluate_on_dataset(
    model: Tcnformer,
    dataset: SeasonDataset,
    *,
    season: str,
    variant: str = "full",
    fingerprint: str = "",
) -> RunReport:
    """Forecast the held-out test window and score it in physical units."""
    model.eval()
    pred_scaled = model(Tensor(dataset.test_input[None, :])).data[0]
    forecast = apply_minmax(pred_scaled, dataset.scaler, inverse=True)
    truth = np.asarray(dataset.test_target, dtype=np.float64)

    last_observed = apply_minmax(
        np.asarray([dataset.test_input[-1]]), dataset.scaler, inverse=True
    )[0]
    baseline = np.full(truth.size, last_observed)

    model_mae = mae(truth, forecast)
    model_mse = mse(truth, forecast)
    baseline_mae = mae(truth, baseline)
    try:
        improvement = relative_improvement(baseline_mae, model_mae)
    except UndefinedImprovementError:
        improvement = float("nan")

    return RunReport(
        season=season,
        variant=variant,
        mae=model_mae,
        mse=model_mse,
        per_step_abs_error=np.abs(truth - forecast),
        forecast=forecast,
        truth=truth,
        baseline_mae=baseline_mae,
        improvement_vs_baseline_pct=improvement,
        config_fingerprint=fingerprint,
    )


def report_to_text(report: RunReport) -> str:
    """Structured text serialization: a key/value block, then a per-step
    table with columns step,forecast,truth,abs_error (all m/s)."""
    out = io.StringIO()
    out.write("# forecast run report\n")
    out.write(f"season: {report.season}\n")
    out.write(f"variant: {report.variant}\n")
    out.write(f"config_fingerprint: {report.config_fingerprint}\n")
    out.write(f"mae_m_per_s: {float(report.mae)!r}\n")
    out.write(f"mse_m2_per_s2: {float(report.mse)!r}\n")
    out.write(f"persistence_mae_m_per_s: {float(report.baseline_mae)!r}\n")
    out.write(
        "improvement_vs_persistence_pct: "
        f"{float(report.improvement_vs_baseline_pct)!r}\n"
    )
    out.write("\nstep,forecast_m_per_s,truth_m_per_s,abs_error_m_per_s\n")
    for i in range(report.forecast.size):
        out.write(
            f"{i + 1},{float(report.forecast[i])!r},{float(report.truth[i])!r},"
            f"{float(report.per_step_abs_error[i])!r}\n"
        )
    return out.getvalue()


def comparison_csv(reports: list[RunReport]) -> str:
    """CSV table with columns variant,season,mae,mse,improvement_vs_baseline_pct."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(COMPARISON_COLUMNS)
    for r in reports:
        writer.writerow(
            [r.variant, r.season, repr(float(r.mae)), repr(float(r.mse)),
             repr(float(r.improvement_vs_baseline_pct))]
        )
    return out.getvalue()


def per_step_csv(reports: list[RunReport]) -> str:
    """CSV of per-future-step absolute-error curves, one row per step."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(PER_STEP_COLUMNS)
    for r in reports:
        for i, err in enumerate(r.per_step_abs_error):
            writer.writerow([r.variant, r.season, i + 1, repr(float(err))])
    return out.getvalue()


# ------------------------------------------------------------------ ablation


def variant_config(base: ModelConfig, variant: str) -> ModelConfig:
    """The three ablation arms: each substitution touches one sub-layer."""
    if variant == "full":
        return replace(base, sublayer1="ctmsa", sublayer2="tea")
    if variant == "no-ctmsa":
        return replace(base, sublayer1="msa", sublayer2="tea")
    if variant == "no-tea":
        return replace(base, sublayer1="ctmsa", sublayer2="msa")
    raise ContractError(f"unknown ablation variant '{variant}'; expected {VARIANTS}")


def _audit_substitution(
    full_names: set[str], variant_names: set[str], variant: str
) -> str:
    """Verify a variant's parameter names differ from the full model's only
    in the intended sub-layer; returns a one-line audit summary."""
    markers = {"no-ctmsa": (".ctmsa.", ".msa1."), "no-tea": (".tea.", ".msa2.")}
    removed_marker, added_marker = markers[variant]
    removed = full_names - variant_names
    added = variant_names - full_names
    if not removed or not added:
        raise ContractError(
            f"ablation arm '{variant}' produced no parameter substitution"
        )
    for name in sorted(removed):
        if removed_marker not in name:
            raise ContractError(
                f"ablation arm '{variant}' unexpectedly dropped parameter '{name}'"
            )
    for name in sorted(added):
        if added_marker not in name:
            raise ContractError(
                f"ablation arm '{variant}' unexpectedly added parameter '{name}'"
            )
    return (
        f"{variant}: replaced {len(removed)} '{removed_marker}' parameters "
        f"with {len(added)} '{added_marker}' parameters; "
        f"{len(full_names & variant_names)} shared parameters untouched"
    )


@dataclass
class AblationResult:
    """Three retrained arms plus the parameter-name audit trail."""

    reports: list[RunReport]
    train_results: dict[str, TrainResult]
    parameter_names: dict[str, tuple[str, ...]]
    audit_lines: list[str]


def run_ablation(
    dataset: SeasonDataset,
    base_config: ModelConfig,
    train_cfg: TrainConfig,
    *,
    season: str,
) -> AblationResult:
    """Train and evaluate the three arms under identical seed and config.

    Arms run sequentially from fresh models and share no mutable state, so a
    failure in one arm cannot corrupt another.
    """
    fingerprint = config_fingerprint(base_config, train_cfg)
    reports: list[RunReport] = []
    train_results: dict[str, TrainResult] = {}
    parameter_names: dict[str, tuple[str, ...]] = {}

    for variant in VARIANTS:
        cfg = variant_config(base_config, variant)
        model = Tcnformer(cfg, seed=train_cfg.seed)
        parameter_names[variant] = tuple(
            sorted(name for name, _ in model.named_parameters())
        )
        train_results[variant] = train_model(model, dataset.train, dataset.val, train_cfg)
        reports.append(
            evaluate_on_dataset(
                model, dataset, season=season, variant=variant,
                fingerprint=fingerprint,
            )
        )

    full_names = set(parameter_names["full"])
    audit_lines = [
        _audit_substitution(full_names, set(parameter_names[v]), v)
        for v in ("no-ctmsa", "no-tea")
    ]
    return AblationResult(
        reports=reports,
        train_results=train_results,
        parameter_names=parameter_names,
        audit_lines=audit_lines,
    )
