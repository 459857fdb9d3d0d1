"""Run orchestration: each operation reads a RunConfig, does its work, and
leaves a self-describing run directory behind.

Every training run directory contains the effective config echo, the
checkpoint, the training log, the test-window metrics, and the full report —
enough to reproduce the run bitwise (wall-clock columns aside) given the
same build and data.
"""

from __future__ import annotations

from dataclasses import replace
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .config import RunConfig, _parse_int_tuple, model_config, train_config
from .data import (
    ScalerParams,
    SeasonDataset,
    WindowSet,
    WindSeries,
    apply_minmax,
    fetch_nasa_power,
    parse_power_csv,
    season_slice,
    split_series,
)
from .errors import CheckpointError, ConfigError, DataRangeError
from .evaluation import (
    comparison_csv,
    config_fingerprint,
    evaluate_on_dataset,
    per_step_csv,
    report_to_text,
    run_ablation,
)
from .model import ModelConfig, Tcnformer, load_checkpoint, save_checkpoint
from .training import LogRow, train_model

TRAINING_LOG_COLUMNS = ("epoch", "train_mse", "val_mse", "seconds")
FORECAST_COLUMNS = ("timestamp", "ws10m_pred")

_META_MODEL_KEYS = (
    "lookback", "horizon", "channels", "kernel_size", "dilations",
    "heads", "windows", "memory_slots", "dropout", "sublayer1", "sublayer2",
)


# ------------------------------------------------------------------- helpers


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _load_series(cfg: RunConfig) -> WindSeries:
    if not cfg.data_path:
        raise ConfigError("config key 'data_path' is required for this command")
    series = parse_power_csv(cfg.data_path)
    if cfg.season:
        series = season_slice(series, cfg.season, cfg.year)
    return series


def _season_label(cfg: RunConfig) -> str:
    return cfg.season if cfg.season else "all"


def _variant_name(mc: ModelConfig) -> str:
    kinds = (mc.sublayer1, mc.sublayer2)
    return {
        ("ctmsa", "tea"): "full",
        ("msa", "tea"): "no-ctmsa",
        ("ctmsa", "msa"): "no-tea",
    }.get(kinds, f"{mc.sublayer1}+{mc.sublayer2}")


def training_log_csv(log: list[LogRow]) -> str:
    lines = [",".join(TRAINING_LOG_COLUMNS)]
    for row in log:
        lines.append(
            f"{row.epoch},{row.train_mse!r},{row.val_mse!r},{row.seconds!r}"
        )
    return "\n".join(lines) + "\n"


def forecast_vs_truth_csv(report_start: datetime, forecast: np.ndarray,
                          truth: np.ndarray) -> str:
    lines = ["timestamp,ws10m_pred,ws10m_true"]
    for i in range(forecast.size):
        ts = report_start + timedelta(hours=i)
        lines.append(f"{ts.isoformat()}Z,{float(forecast[i])!r},{float(truth[i])!r}")
    return "\n".join(lines) + "\n"


def _checkpoint_meta(cfg: RunConfig, mc: ModelConfig, ds: SeasonDataset,
                     fingerprint: str, best_epoch: int,
                     best_val_mse: float) -> dict:
    return {
        "fingerprint": fingerprint,
        "seed": cfg.seed,
        "season": _season_label(cfg),
        "year": cfg.year,
        "best_epoch": best_epoch,
        "best_val_mse": best_val_mse,
        "scaler_min": ds.scaler.vmin,
        "scaler_max": ds.scaler.vmax,
        "n_train_rows": ds.n_train_rows,
        "lookback": mc.lookback,
        "horizon": mc.horizon,
        "channels": mc.channels,
        "kernel_size": mc.kernel_size,
        "dilations": ",".join(str(d) for d in mc.dilations),
        "heads": mc.heads,
        "windows": ",".join(str(w) for w in mc.windows),
        "memory_slots": mc.memory_slots,
        "dropout": mc.dropout,
        "sublayer1": mc.sublayer1,
        "sublayer2": mc.sublayer2,
    }


def model_config_from_meta(meta: dict) -> ModelConfig:
    """Rebuild the exact architecture a checkpoint was trained with."""
    missing = [k for k in _META_MODEL_KEYS if k not in meta]
    if missing:
        raise CheckpointError(
            f"checkpoint metadata missing model keys: {', '.join(missing)}"
        )
    return ModelConfig(
        lookback=int(meta["lookback"]),
        horizon=int(meta["horizon"]),
        channels=int(meta["channels"]),
        kernel_size=int(meta["kernel_size"]),
        dilations=_parse_int_tuple("dilations", str(meta["dilations"])),
        heads=int(meta["heads"]),
        windows=_parse_int_tuple("windows", str(meta["windows"])),
        memory_slots=int(meta["memory_slots"]),
        dropout=float(meta["dropout"]),
        sublayer1=str(meta["sublayer1"]),
        sublayer2=str(meta["sublayer2"]),
    )


def load_model_from_checkpoint(path: str) -> tuple[Tcnformer, ScalerParams, dict]:
    """Restore a trained model and its scaler calibration from disk."""
    params, meta = load_checkpoint(path)
    mc = model_config_from_meta(meta)
    for key in ("seed", "scaler_min", "scaler_max"):
        if key not in meta:
            raise CheckpointError(f"checkpoint metadata missing key '{key}'")
    model = Tcnformer(mc, seed=int(meta["seed"]))
    model.restore_state(params)
    model.eval()
    scaler = ScalerParams(float(meta["scaler_min"]), float(meta["scaler_max"]))
    return model, scaler, meta


def _test_window_dataset(series: WindSeries, lookback: int, horizon: int,
                         scaler: ScalerParams) -> SeasonDataset:
    """The evaluation protocol's single held-out window, scaled with a
    previously fitted (checkpoint) scaler rather than a refit."""
    n = len(series)
    if n < lookback + horizon:
        raise DataRangeError(
            f"series of {n} hours too short for a {lookback}+{horizon} test window"
        )
    empty = WindowSet(np.zeros((0, lookback)), np.zeros((0, horizon)), ())
    test_raw = series.values[n - horizon - lookback : n - horizon]
    return SeasonDataset(
        train=empty,
        val=empty,
        test_input=apply_minmax(test_raw, scaler),
        test_target=series.values[n - horizon :].copy(),
        test_start=series.timestamps[n - horizon],
        scaler=scaler,
        n_train_rows=0,
    )


# ---------------------------------------------------------------- operations


def run_fetch(cfg: RunConfig) -> dict:
    """Download the configured span and leave raw + canonical CSVs behind."""
    if not cfg.start_date or not cfg.end_date:
        raise ConfigError(
            "config keys 'start_date' and 'end_date' (YYYYMMDD) are required "
            "for fetch"
        )

    def parse_day(key: str, raw: str) -> date:
        try:
            return datetime.strptime(raw, "%Y%m%d").date()
        except ValueError as exc:
            raise ConfigError(
                f"config key '{key}': expected YYYYMMDD, got '{raw}'"
            ) from exc

    start = parse_day("start_date", cfg.start_date)
    end = parse_day("end_date", cfg.end_date)
    if end < start:
        raise ConfigError("end_date precedes start_date")
    result = fetch_nasa_power(
        start, end, cfg.out_dir,
        latitude=cfg.latitude, longitude=cfg.longitude,
        endpoint=cfg.endpoint_url,
    )
    result["out_dir"] = str(cfg.out_dir)
    return result


def run_train(cfg: RunConfig) -> dict:
    """Train on the configured season, then score the held-out test window."""
    mc = model_config(cfg)
    tc = train_config(cfg)
    series = _load_series(cfg)
    ds = split_series(series, mc.lookback, mc.horizon, val_fraction=cfg.val_fraction)

    model = Tcnformer(mc, seed=cfg.seed)
    result = train_model(model, ds.train, ds.val, tc)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.txt", cfg.to_text())
    _write(out / "training_log.csv", training_log_csv(result.log))

    fingerprint = config_fingerprint(mc, tc)
    meta = _checkpoint_meta(
        cfg, mc, ds, fingerprint, result.best_epoch, result.best_val_mse
    )
    checkpoint_path = out / "checkpoint.bin"
    save_checkpoint(checkpoint_path, model, meta)

    season = _season_label(cfg)
    report = evaluate_on_dataset(
        model, ds, season=season, variant=_variant_name(mc),
        fingerprint=fingerprint,
    )
    _write(out / "metrics.csv", comparison_csv([report]))
    _write(out / "report.txt", report_to_text(report))
    _write(
        out / "forecast_vs_truth.csv",
        forecast_vs_truth_csv(ds.test_start, report.forecast, report.truth),
    )

    return {
        "run_dir": str(out),
        "checkpoint": str(checkpoint_path),
        "season": season,
        "epochs_run": result.epochs_run,
        "best_epoch": result.best_epoch,
        "best_val_mse": result.best_val_mse,
        "stopped_early": result.stopped_early,
        "test_mae": report.mae,
        "test_mse": report.mse,
        "improvement_vs_baseline_pct": report.improvement_vs_baseline_pct,
        "files": {
            "config": str(out / "config.txt"),
            "checkpoint": str(checkpoint_path),
            "training_log": str(out / "training_log.csv"),
            "metrics": str(out / "metrics.csv"),
            "report": str(out / "report.txt"),
            "forecast_vs_truth": str(out / "forecast_vs_truth.csv"),
        },
    }


def run_evaluate(cfg: RunConfig) -> dict:
    """Score a stored checkpoint on the configured season's test window."""
    if not cfg.checkpoint:
        raise ConfigError("config key 'checkpoint' is required for evaluate")
    model, scaler, meta = load_model_from_checkpoint(cfg.checkpoint)
    mc = model.config
    series = _load_series(cfg)
    ds = _test_window_dataset(series, mc.lookback, mc.horizon, scaler)

    season = _season_label(cfg)
    report = evaluate_on_dataset(
        model, ds, season=season, variant=_variant_name(mc),
        fingerprint=str(meta.get("fingerprint", "")),
    )

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.txt", cfg.to_text())
    _write(out / "metrics.csv", comparison_csv([report]))
    _write(out / "report.txt", report_to_text(report))
    _write(
        out / "forecast_vs_truth.csv",
        forecast_vs_truth_csv(ds.test_start, report.forecast, report.truth),
    )

    return {
        "run_dir": str(out),
        "season": season,
        "variant": report.variant,
        "mae": report.mae,
        "mse": report.mse,
        "baseline_mae": report.baseline_mae,
        "improvement_vs_baseline_pct": report.improvement_vs_baseline_pct,
        "files": {
            "config": str(out / "config.txt"),
            "metrics": str(out / "metrics.csv"),
            "report": str(out / "report.txt"),
            "forecast_vs_truth": str(out / "forecast_vs_truth.csv"),
        },
    }


def run_forecast(cfg: RunConfig) -> dict:
    """Forecast the next horizon hours from the latest lookback hours."""
    if not cfg.checkpoint:
        raise ConfigError("config key 'checkpoint' is required for forecast")
    model, scaler, _meta = load_model_from_checkpoint(cfg.checkpoint)
    mc = model.config
    series = _load_series(cfg)
    n = len(series)
    if n < mc.lookback:
        raise DataRangeError(
            f"series of {n} hours too short for lookback {mc.lookback}"
        )

    window = series.values[n - mc.lookback :]
    scaled = apply_minmax(window, scaler)
    pred_scaled = model(Tensor(scaled[None, :])).data[0]
    forecast = apply_minmax(pred_scaled, scaler, inverse=True)
    last_ts = series.timestamps[-1]

    lines = [",".join(FORECAST_COLUMNS)]
    rows = []
    for i in range(mc.horizon):
        ts = last_ts + timedelta(hours=i + 1)
        lines.append(f"{ts.isoformat()}Z,{float(forecast[i])!r}")
        rows.append({"timestamp": ts.isoformat() + "Z", "ws10m_pred": float(forecast[i])})

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    forecast_path = out / "forecast.csv"
    _write(forecast_path, "\n".join(lines) + "\n")

    return {
        "run_dir": str(out),
        "forecast_csv": str(forecast_path),
        "horizon": mc.horizon,
        "rows": rows,
    }


def run_ablate(cfg: RunConfig) -> dict:
    """Three-arm substitution study on the configured season."""
    base = replace(model_config(cfg), sublayer1="ctmsa", sublayer2="tea")
    tc = train_config(cfg)
    series = _load_series(cfg)
    ds = split_series(series, base.lookback, base.horizon, val_fraction=cfg.val_fraction)

    season = _season_label(cfg)
    result = run_ablation(ds, base, tc, season=season)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.txt", cfg.to_text())
    _write(out / "comparison.csv", comparison_csv(result.reports))
    _write(out / "per_step_mae.csv", per_step_csv(result.reports))
    _write(out / "audit.txt", "\n".join(result.audit_lines) + "\n")
    for report in result.reports:
        arm_dir = out / f"arm_{report.variant.replace('-', '_')}"
        arm_dir.mkdir(parents=True, exist_ok=True)
        _write(arm_dir / "report.txt", report_to_text(report))
        _write(
            arm_dir / "training_log.csv",
            training_log_csv(result.train_results[report.variant].log),
        )

    return {
        "run_dir": str(out),
        "season": season,
        "arms": [
            {
                "variant": r.variant,
                "mae": r.mae,
                "mse": r.mse,
                "improvement_vs_baseline_pct": r.improvement_vs_baseline_pct,
            }
            for r in result.reports
        ],
        "audit": result.audit_lines,
        "files": {
            "config": str(out / "config.txt"),
            "comparison": str(out / "comparison.csv"),
            "per_step_mae": str(out / "per_step_mae.csv"),
            "audit": str(out / "audit.txt"),
        },
    }
