"""Wind-speed data handling: NASA POWER ingestion, the six-season calendar,
min-max scaling, and sliding-window construction.

Canonical on-disk form is a two-column CSV `timestamp,ws10m` with hourly
ISO-8601 UTC timestamps. The raw NASA POWER hourly export (header block,
then YEAR,MO,DY,HR,... columns) is also accepted and converted.
"""

from __future__ import annotations

import csv
import io
import json
import time as _time
from dataclasses import dataclass
from datetime import date, datetime, timedelta

import numpy as np
import requests

from .errors import (
    ContractError,
    DataRangeError,
    DegenerateScalerError,
    FetchError,
    IngestionError,
)

SENTINEL = -999.0
HOUR = timedelta(hours=1)

DEFAULT_LATITUDE = 22.2352
DEFAULT_LONGITUDE = 91.7914
DEFAULT_ENDPOINT = "https://power.larc.nasa.gov/api/temporal/hourly/point"

# season name -> (start month, start day); each runs to the eve of the next
# boundary, so the six of them tile the whole year. Winter crosses New Year.
SEASON_STARTS = {
    "summer": (4, 15),
    "rainy": (6, 15),
    "autumn": (8, 15),
    "late_autumn": (10, 15),
    "winter": (12, 15),
    "spring": (2, 15),
}
SEASON_ORDER = ("summer", "rainy", "autumn", "late_autumn", "winter", "spring")


@dataclass(frozen=True)
class WindSeries:
    """Hourly wind speeds (m/s) with their UTC timestamps."""

    timestamps: tuple[datetime, ...]
    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", np.array(self.values, dtype=np.float64))
        if len(self.timestamps) != len(self.values):
            raise ContractError(
                f"{len(self.timestamps)} timestamps for {len(self.values)} values"
            )
        self.values.flags.writeable = False

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ScalerParams:
    vmin: float
    vmax: float


@dataclass(frozen=True)
class SeriesStats:
    std: float
    vmin: float
    vmax: float


@dataclass(frozen=True)
class WindowSet:
    """Sliding windows: inputs [n, lookback], aligned targets [n, horizon]."""

    inputs: np.ndarray
    targets: np.ndarray
    starts: tuple[datetime, ...]

    def __len__(self) -> int:
        return self.inputs.shape[0]


# ------------------------------------------------------------------ parsing


def _parse_timestamp(text: str, row: int) -> datetime:
    cleaned = text.strip()
    if cleaned.endswith("Z"):
        cleaned = cleaned[:-1]
    try:
        ts = datetime.fromisoformat(cleaned)
    except ValueError:
        raise IngestionError(f"row {row}: bad timestamp {text!r}") from None
    if ts.tzinfo is not None:
        ts = ts.replace(tzinfo=None)  # canonical timestamps are already UTC
    return ts


def _parse_speed(text: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestionError(f"row {row}: bad wind speed {text!r}") from None
    if value == SENTINEL:
        raise IngestionError(f"row {row}: sentinel value {SENTINEL:g} (missing data)")
    if not np.isfinite(value):
        raise IngestionError(f"row {row}: non-finite wind speed {text!r}")
    return value


def _check_hourly(timestamps: list[datetime], first_data_row: int) -> None:
    for i in range(1, len(timestamps)):
        got = timestamps[i] - timestamps[i - 1]
        if got != HOUR:
            row = first_data_row + i
            if got <= timedelta(0):
                raise IngestionError(
                    f"row {row}: timestamps not strictly increasing "
                    f"({timestamps[i].isoformat()} after {timestamps[i-1].isoformat()})"
                )
            raise IngestionError(
                f"row {row}: gap in hourly series "
                f"({timestamps[i-1].isoformat()} -> {timestamps[i].isoformat()})"
            )


def parse_power_csv(path) -> WindSeries:
    """Parse a canonical `timestamp,ws10m` CSV or a raw NASA POWER hourly
    export into an hourly WindSeries. Errors carry the 1-based row number."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_power_text(text, source=str(path))


def parse_power_text(text: str, source: str = "") -> WindSeries:
    lines = text.splitlines()
    if not lines:
        raise IngestionError("row 1: file is empty")
    # locate the column header, skipping any POWER preamble block
    header_row = None
    for i, line in enumerate(lines):
        bare = line.strip().lower()
        if bare.startswith("timestamp,") or bare.startswith("year,"):
            header_row = i
            break
    if header_row is None:
        raise IngestionError("row 1: no recognizable column header "
                             "(expected 'timestamp,ws10m' or 'YEAR,MO,DY,HR,...')")
    reader = csv.reader(io.StringIO("\n".join(lines[header_row:])))
    rows = list(reader)
    header = [c.strip().lower() for c in rows[0]]
    first_data_row = header_row + 2  # 1-based row number of the first data line

    timestamps: list[datetime] = []
    values: list[float] = []
    if header[:2] == ["timestamp", "ws10m"]:
        for offset, row in enumerate(rows[1:]):
            n = first_data_row + offset
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise IngestionError(f"row {n}: expected 2 columns, got {len(row)}")
            timestamps.append(_parse_timestamp(row[0], n))
            values.append(_parse_speed(row[1], n))
    elif "year" in header:
        for col in ("year", "mo", "dy", "hr", "ws10m"):
            if col not in header:
                raise IngestionError(f"row {header_row + 1}: missing column {col.upper()}")
        ix = {c: header.index(c) for c in ("year", "mo", "dy", "hr", "ws10m")}
        for offset, row in enumerate(rows[1:]):
            n = first_data_row + offset
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                ts = datetime(int(row[ix["year"]]), int(row[ix["mo"]]),
                              int(row[ix["dy"]]), int(row[ix["hr"]]))
            except (ValueError, IndexError):
                raise IngestionError(f"row {n}: bad date fields {row!r}") from None
            timestamps.append(ts)
            values.append(_parse_speed(row[ix["ws10m"]], n))
    else:
        raise IngestionError(f"row {header_row + 1}: unrecognized header {rows[0]!r}")

    if not timestamps:
        raise IngestionError(f"row {first_data_row}: no data rows")
    _check_hourly(timestamps, first_data_row)
    return WindSeries(tuple(timestamps), np.array(values), source=source)


def write_canonical_csv(path, series: WindSeries) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "ws10m"])
        for ts, v in zip(series.timestamps, series.values):
            writer.writerow([ts.isoformat() + "Z", repr(float(v))])


# ------------------------------------------------------------------ fetching


def fetch_nasa_power(start: date, end: date, out_dir,
                     latitude: float = DEFAULT_LATITUDE,
                     longitude: float = DEFAULT_LONGITUDE,
                     endpoint: str = DEFAULT_ENDPOINT,
                     max_attempts: int = 3,
                     backoff_base: float = 0.5,
                     sleep=_time.sleep) -> dict:
    """Download hourly WS10M from the POWER API, persisting the raw response
    next to a small metadata record, then convert to the canonical CSV.

    Retries transient failures up to max_attempts with exponential backoff.
    Returns a dict with raw_path, canonical_path, meta_path, url and rows.
    """
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = {
        "parameters": "WS10M",
        "community": "RE",
        "latitude": f"{latitude}",
        "longitude": f"{longitude}",
        "start": start.strftime("%Y%m%d"),
        "end": end.strftime("%Y%m%d"),
        "format": "CSV",
    }
    last_error: Exception | None = None
    response = None
    url = endpoint
    for attempt in range(max_attempts):
        if attempt:
            sleep(backoff_base * 2 ** (attempt - 1))
        try:
            response = requests.get(endpoint, params=params, timeout=60)
            url = response.url
            if response.status_code == 200:
                break
            last_error = FetchError(f"HTTP {response.status_code} from {url}")
            response = None
        except requests.RequestException as exc:
            last_error = exc
            response = None
    if response is None:
        raise FetchError(
            f"download failed after {max_attempts} attempts: {last_error}"
        )

    stamp = f"{params['start']}_{params['end']}"
    raw_path = out / f"power_raw_{stamp}.csv"
    raw_path.write_bytes(response.content)
    meta_path = out / f"power_raw_{stamp}.meta.json"
    meta_path.write_text(json.dumps({
        "url": url,
        "retrieved_at": datetime.utcnow().isoformat() + "Z",
        "latitude": latitude,
        "longitude": longitude,
        "start": params["start"],
        "end": params["end"],
    }, indent=2))

    series = parse_power_text(response.content.decode("utf-8"), source=str(raw_path))
    canonical_path = out / f"power_{stamp}.csv"
    write_canonical_csv(canonical_path, series)
    return {
        "raw_path": str(raw_path),
        "canonical_path": str(canonical_path),
        "meta_path": str(meta_path),
        "url": url,
        "rows": len(series),
    }


# ------------------------------------------------------------------- seasons


def season_for(ts: datetime) -> str:
    """Which of the six seasons contains this timestamp."""
    boundaries = sorted((m, d, name) for name, (m, d) in SEASON_STARTS.items())
    current = boundaries[-1][2]  # before the first boundary of the year = winter
    for m, d, name in boundaries:
        if (ts.month, ts.day) >= (m, d):
            current = name
    return current


def season_span(season: str, year: int) -> tuple[datetime, datetime]:
    """[start, end) of a season; `year` is the calendar year it starts in."""
    season = season.lower()
    if season not in SEASON_STARTS:
        raise ContractError(
            f"unknown season {season!r}; valid names: {', '.join(SEASON_ORDER)}"
        )
    month, day = SEASON_STARTS[season]
    start = datetime(year, month, day)
    nxt = SEASON_ORDER[(SEASON_ORDER.index(season) + 1) % len(SEASON_ORDER)]
    nm, nd = SEASON_STARTS[nxt]
    end_year = year + 1 if (nm, nd) < (month, day) else year
    return start, datetime(end_year, nm, nd)


def season_slice(series: WindSeries, season: str, year: int) -> WindSeries:
    """The hours of `series` inside the season starting in `year`."""
    start, end = season_span(season, year)
    if not series.timestamps:
        raise DataRangeError("series is empty")
    if series.timestamps[0] > start or series.timestamps[-1] < end - HOUR:
        raise DataRangeError(
            f"series covers {series.timestamps[0].isoformat()} .. "
            f"{series.timestamps[-1].isoformat()} but {season} {year} needs "
            f"{start.isoformat()} .. {(end - HOUR).isoformat()}"
        )
    lo = int((start - series.timestamps[0]).total_seconds() // 3600)
    hi = int((end - series.timestamps[0]).total_seconds() // 3600)
    return WindSeries(series.timestamps[lo:hi], series.values[lo:hi].copy(),
                      source=series.source)


# ------------------------------------------------------------------- scaling


def fit_minmax(values: np.ndarray) -> ScalerParams:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ContractError("cannot fit a scaler on an empty series")
    vmin, vmax = float(values.min()), float(values.max())
    if vmax - vmin < 1e-12:
        raise DegenerateScalerError(
            f"series is constant (min == max == {vmin:g}); min-max scaling undefined"
        )
    return ScalerParams(vmin, vmax)


def apply_minmax(values: np.ndarray, params: ScalerParams, inverse: bool = False) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    span = params.vmax - params.vmin
    if inverse:
        return values * span + params.vmin
    return (values - params.vmin) / span


# ------------------------------------------------------------------ windows


def make_windows(values: np.ndarray, lookback: int, horizon: int,
                 timestamps: tuple[datetime, ...] | None = None) -> WindowSet:
    """Stride-1 sliding windows; window i reads values[i : i+lookback] and
    predicts values[i+lookback : i+lookback+horizon]."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values) - lookback - horizon + 1
    if n < 1:
        raise DataRangeError(
            f"series of {len(values)} hours too short for lookback {lookback} "
            f"+ horizon {horizon} (needs at least {lookback + horizon})"
        )
    inputs = np.stack([values[i : i + lookback] for i in range(n)])
    targets = np.stack([values[i + lookback : i + lookback + horizon] for i in range(n)])
    starts = tuple(timestamps[:n]) if timestamps is not None else tuple()
    return WindowSet(inputs, targets, starts)


def series_stats(values: np.ndarray) -> SeriesStats:
    """Population std, min, max (the per-season summary statistics)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ContractError("stats of an empty series")
    return SeriesStats(float(values.std()), float(values.min()), float(values.max()))


# ---------------------------------------------------------- training splits


@dataclass(frozen=True)
class SeasonDataset:
    """Everything the trainer needs for one series: scaled train/val windows,
    the single held-out test window, and the scaler fitted on training rows."""

    train: WindowSet
    val: WindowSet
    test_input: np.ndarray      # [lookback], scaled
    test_target: np.ndarray     # [horizon], physical units
    test_start: datetime        # timestamp of the first forecast step
    scaler: ScalerParams
    n_train_rows: int           # rows the scaler saw


def split_series(series: WindSeries, lookback: int, horizon: int,
                 val_fraction: float = 0.1) -> SeasonDataset:
    """Protocol: the last lookback+horizon hours form the one test window;
    windows over everything before the test target are training material,
    with the final `val_fraction` of them (latest start times) as validation.
    The scaler is fitted on those first len-horizon rows only."""
    n = len(series)
    if n < lookback + 2 * horizon + 1:
        raise DataRangeError(
            f"series of {n} hours too short: need at least "
            f"{lookback + 2 * horizon + 1} for one training and one test window"
        )
    train_rows = n - horizon
    scaler = fit_minmax(series.values[:train_rows])
    scaled = apply_minmax(series.values, scaler)

    windows = make_windows(scaled[:train_rows], lookback, horizon,
                           timestamps=series.timestamps[:train_rows])
    n_windows = len(windows)
    n_val = max(1, int(round(val_fraction * n_windows)))
    if n_val >= n_windows:
        raise DataRangeError(
            f"only {n_windows} training windows; cannot hold out {n_val} for validation"
        )
    split = n_windows - n_val
    train = WindowSet(windows.inputs[:split], windows.targets[:split],
                      windows.starts[:split])
    val = WindowSet(windows.inputs[split:], windows.targets[split:],
                    windows.starts[split:])
    return SeasonDataset(
        train=train,
        val=val,
        test_input=scaled[n - horizon - lookback : n - horizon],
        test_target=series.values[n - horizon :].copy(),
        test_start=series.timestamps[n - horizon],
        scaler=scaler,
        n_train_rows=train_rows,
    )


# ----------------------------------------------------------------- fixtures


def synthetic_sine_series(hours: int, period: float = 24.0, amplitude: float = 1.0,
                          mean: float = 5.0, noise: float = 0.05, seed: int = 0,
                          start: datetime = datetime(2021, 1, 1)) -> WindSeries:
    """Seeded sine-plus-noise fixture shaped like a diurnal wind cycle."""
    rng = np.random.default_rng(seed)
    t = np.arange(hours, dtype=np.float64)
    values = mean + amplitude * np.sin(2.0 * np.pi * t / period)
    values = values + rng.normal(0.0, noise, size=hours)
    timestamps = tuple(start + HOUR * int(i) for i in range(hours))
    return WindSeries(timestamps, values, source=f"synthetic(seed={seed})")
