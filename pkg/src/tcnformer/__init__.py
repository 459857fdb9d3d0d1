"""TCNFormer: short-term wind-speed forecasting.

A self-contained forecasting system: dilated causal convolutions feed a
transformer encoder whose attention is windowed-causal in sub-layer one and
reads trainable external memory in sub-layer two; a dense head emits the
whole forecast horizon in one shot.  Includes data ingestion for the NASA
POWER hourly wind product, a seasonal train/evaluate/ablate protocol, an
HTTP service, and a CLI.
"""

from .autodiff import Tensor
from .config import RunConfig, load_config, parse_config_text
from .data import (
    SeasonDataset,
    WindSeries,
    fetch_nasa_power,
    parse_power_csv,
    season_slice,
    split_series,
)
from .errors import TcnformerError
from .evaluation import (
    RunReport,
    mae,
    mse,
    persistence_baseline,
    relative_improvement,
    run_ablation,
)
from .model import ModelConfig, Tcnformer, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainResult, train_model

__version__ = "1.0.0"

__all__ = [
    "ModelConfig",
    "RunConfig",
    "RunReport",
    "SeasonDataset",
    "Tcnformer",
    "TcnformerError",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "WindSeries",
    "fetch_nasa_power",
    "load_checkpoint",
    "load_config",
    "mae",
    "mse",
    "parse_config_text",
    "parse_power_csv",
    "persistence_baseline",
    "relative_improvement",
    "run_ablation",
    "save_checkpoint",
    "season_slice",
    "split_series",
    "train_model",
    "__version__",
]
