"""Flat key=value run configuration.

One RunConfig drives every subcommand: data location, season selection,
model hyperparameters, training hyperparameters, and output directory.
The file format is plain ``key=value`` lines ('#' comments and blank lines
ignored); command-line flags mirror the keys one-to-one and override file
values.  ``to_text`` emits a canonical echo that reparses to an identical
RunConfig, and every run directory receives that echo for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .data import DEFAULT_ENDPOINT, DEFAULT_LATITUDE, DEFAULT_LONGITUDE
from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    """Every knob, with a documented default (see README key table)."""

    # data
    data_path: str = ""
    season: str = ""            # empty = use the whole series
    year: int = 2021
    val_fraction: float = 0.1
    # fetch
    latitude: float = DEFAULT_LATITUDE
    longitude: float = DEFAULT_LONGITUDE
    start_date: str = ""        # YYYYMMDD
    end_date: str = ""          # YYYYMMDD
    endpoint_url: str = DEFAULT_ENDPOINT
    # model
    lookback: int = 72
    horizon: int = 12
    channels: int = 32
    kernel_size: int = 3
    dilations: str = "1,2,4"
    heads: int = 4
    windows: str = "12,24"
    memory_slots: int = 16
    dropout: float = 0.1
    sublayer1: str = "ctmsa"
    sublayer2: str = "tea"
    # training
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    patience: int = 20
    clip_norm: float = 5.0
    seed: int = 0
    # outputs / inputs
    out_dir: str = "runs"
    checkpoint: str = ""

    def to_mapping(self) -> dict[str, str]:
        """Every key as canonical text; floats via repr so values round-trip."""
        out: dict[str, str] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = repr(value) if isinstance(value, float) else str(value)
        return out

    def to_text(self) -> str:
        """Canonical echo; reparses to an identical RunConfig."""
        lines = ["# effective run configuration"]
        lines.extend(f"{key}={text}" for key, text in self.to_mapping().items())
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CONVERTERS = {"int": int, "float": float, "str": str}

CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))


def _convert(key: str, raw: str, where: str):
    type_name = _FIELD_TYPES[key]
    conv = _CONVERTERS[type_name]
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(
            f"config key '{key}' at {where}: cannot parse '{raw}' as {type_name}"
        ) from exc


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    """Parse key=value lines into a RunConfig, defaults filling the gaps."""
    values: dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"malformed line at {source}:{line_no}: expected key=value, "
                f"got '{stripped}'"
            )
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key '{key}' at {source}:{line_no}")
        values[key] = _convert(key, raw, f"{source}:{line_no}")
    return RunConfig(**values)


def load_config(path: str) -> RunConfig:
    """Read a config file; missing keys take their documented defaults."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file '{path}': {exc}") from exc
    return parse_config_text(text, source=path)


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Apply flag values (strings) on top of a config; flags win."""
    updates: dict[str, object] = {}
    for key, raw in overrides.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key '{key}' from command line")
        updates[key] = _convert(key, raw, "command line")
    return replace(cfg, **updates)


def _parse_int_tuple(key: str, raw: str) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"config key '{key}' must list at least one integer")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(
            f"config key '{key}': cannot parse '{raw}' as comma-separated integers"
        ) from exc


def model_config(cfg: RunConfig) -> ModelConfig:
    """Project the run configuration onto the model's hyperparameters."""
    return ModelConfig(
        lookback=cfg.lookback,
        horizon=cfg.horizon,
        channels=cfg.channels,
        kernel_size=cfg.kernel_size,
        dilations=_parse_int_tuple("dilations", cfg.dilations),
        heads=cfg.heads,
        windows=_parse_int_tuple("windows", cfg.windows),
        memory_slots=cfg.memory_slots,
        dropout=cfg.dropout,
        sublayer1=cfg.sublayer1,
        sublayer2=cfg.sublayer2,
    )


def train_config(cfg: RunConfig) -> TrainConfig:
    """Project the run configuration onto the training hyperparameters."""
    return TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        optimizer=cfg.optimizer,
        patience=cfg.patience,
        clip_norm=cfg.clip_norm,
        seed=cfg.seed,
    )
