"""Model assembly and checkpoint persistence.

Forecast path: scaled window [batch, lookback] -> TCN over [batch, 1, time]
-> [batch, channels, time] -> encoder stack over [batch, time, channels]
-> flatten -> dense head -> [batch, horizon]. All horizon steps come out of
one forward pass; nothing is fed back.

Checkpoints are a length-prefixed UTF-8 text header followed by raw
little-endian float32 payloads (exact layout documented in the README).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import EncoderStack
from .errors import CheckpointError, ContractError, ShapeError
from .layers import Dense
from .tcn import Tcn

CHECKPOINT_MAGIC = "tcnformer-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    lookback: int = 72
    horizon: int = 12
    channels: int = 32
    kernel_size: int = 3
    dilations: tuple[int, ...] = (1, 2, 4)
    heads: int = 4
    windows: tuple[int, ...] = (12, 24)
    memory_slots: int = 16
    dropout: float = 0.1
    sublayer1: str = "ctmsa"
    sublayer2: str = "tea"

    def validate(self) -> None:
        if self.lookback < 1 or self.horizon < 1:
            raise ContractError("lookback and horizon must be positive")
        if self.channels % self.heads != 0:
            raise ContractError(
                f"channels {self.channels} not divisible by heads {self.heads}"
            )
        for w in self.windows:
            if self.sublayer1 == "ctmsa" and self.lookback % w != 0:
                raise ContractError(
                    f"lookback {self.lookback} not divisible by attention window {w}"
                )
        if not self.dilations:
            raise ContractError("at least one TCN block is required")
        if not self.windows:
            raise ContractError("at least one encoder layer is required")


class Tcnformer:
    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.seed = int(seed)
        weight_rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0]))
        tcn_drop = np.random.SeedSequence([self.seed, 1])
        enc_drop = np.random.SeedSequence([self.seed, 2])
        self.tcn = Tcn(1, config.channels, config.kernel_size, config.dilations,
                       config.dropout, weight_rng, dropout_seed_base=tcn_drop)
        self.encoder = EncoderStack(config.channels, config.heads, config.windows,
                                    config.memory_slots, config.dropout, weight_rng,
                                    sublayer1=config.sublayer1, sublayer2=config.sublayer2,
                                    dropout_seed_base=enc_drop)
        self.head = Dense(config.lookback * config.channels, config.horizon, weight_rng)
        self.training = True

    # -- forward ----------------------------------------------------------

    def __call__(self, x) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.ndim != 2 or x.shape[1] != self.config.lookback:
            raise ShapeError(
                f"model input must be [batch, {self.config.lookback}], got {x.shape}"
            )
        b, t = x.shape
        h = ad.reshape(x, (b, 1, t))
        h = self.tcn(h)
        h = ad.permute(h, 0, 2, 1)
        h = self.encoder(h)
        h = ad.reshape(h, (b, t * self.config.channels))
        return self.head(h)

    # -- mode switches ------------------------------------------------------

    def train(self) -> None:
        self.training = True
        self.tcn.set_training(True)
        self.encoder.set_training(True)

    def eval(self) -> None:
        self.training = False
        self.tcn.set_training(False)
        self.encoder.set_training(False)

    # -- parameter access -----------------------------------------------------

    def named_parameters(self, prefix: str = ""):
        yield from self.tcn.named_parameters(prefix + "tcn.")
        yield from self.encoder.named_parameters(prefix + "encoder.")
        yield from self.head.named_parameters(prefix + "head.")

    def _buffer_slots(self):
        for i, block in enumerate(self.tcn.blocks):
            for bn_name, bn in (("bn1", block.bn1), ("bn2", block.bn2)):
                for key in ("running_mean", "running_var"):
                    yield f"tcn.block{i}.{bn_name}.{key}", bn, key

    def named_buffers(self):
        for name, bn, key in self._buffer_slots():
            yield name, getattr(bn, key)

    def named_state(self):
        """Parameters followed by buffers; the checkpoint payload order."""
        for name, p in self.named_parameters():
            yield name, p.data
        yield from self.named_buffers()

    def state_snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.named_state()}

    def restore_state(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = {name: (bn, key) for name, bn, key in self._buffer_slots()}
        for name, value in state.items():
            if name in params:
                tensor = params.pop(name)
                if tuple(value.shape) != tensor.data.shape:
                    raise CheckpointError(
                        f"parameter {name}: checkpoint shape {tuple(value.shape)} "
                        f"does not match model shape {tensor.data.shape}"
                    )
                tensor.data = np.ascontiguousarray(value, dtype=np.float64)
            elif name in buffers:
                bn, key = buffers.pop(name)
                bn.set_buffer(key, value)
            else:
                raise CheckpointError(f"unknown parameter name in checkpoint: {name}")
        if params or buffers:
            missing = sorted(list(params) + list(buffers))
            raise CheckpointError(f"checkpoint is missing parameters: {', '.join(missing)}")


def init_params(config: ModelConfig, seed: int = 0) -> Tcnformer:
    """Deterministic build: same config and seed give bitwise-equal weights."""
    return Tcnformer(config, seed)


# -- checkpoint file format ---------------------------------------------------


def _format_meta_value(v) -> str:
    if isinstance(v, bool):  # pragma: no cover - meta holds no bools today
        return str(int(v))
    if isinstance(v, float):  # incl. numpy scalars, which subclass float
        return repr(float(v))  # shortest exact round trip
    return str(v)


def _parse_meta_value(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def save_checkpoint(path, model: Tcnformer, meta: dict) -> None:
    entries = list(model.named_state())
    lines = [f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}"]
    for key in sorted(meta):
        lines.append(f"meta.{key}={_format_meta_value(meta[key])}")
    for name, arr in entries:
        dims = "x".join(str(d) for d in arr.shape)
        lines.append(f"param.{name}={dims}")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (params, meta); params are float64 arrays decoded from the
    float32 payload, keyed by name in file order."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise CheckpointError("checkpoint file too short for its header length")
    (header_len,) = struct.unpack("<I", blob[:4])
    if len(blob) < 4 + header_len:
        raise CheckpointError("checkpoint header is truncated")
    try:
        header = blob[4 : 4 + header_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"checkpoint header is not UTF-8: {exc}") from None
    lines = [ln for ln in header.split("\n") if ln]
    if not lines:
        raise CheckpointError("checkpoint header is empty")
    magic = lines[0]
    if not magic.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"not a checkpoint file (bad magic line {magic!r})")
    if magic != f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}":
        raise CheckpointError(
            f"unsupported checkpoint version {magic!r}; "
            f"this build reads {CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}"
        )
    meta: dict = {}
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for line in lines[1:]:
        if "=" not in line:
            raise CheckpointError(f"malformed checkpoint header line: {line!r}")
        key, value = line.split("=", 1)
        if key.startswith("meta."):
            meta[key[len("meta."):]] = _parse_meta_value(value)
        elif key.startswith("param."):
            name = key[len("param."):]
            if any(name == n for n, _ in shapes):
                raise CheckpointError(f"duplicate parameter name in checkpoint: {name}")
            try:
                shape = tuple(int(d) for d in value.split("x")) if value else ()
            except ValueError:
                raise CheckpointError(f"bad shape {value!r} for parameter {name}") from None
            shapes.append((name, shape))
        else:
            raise CheckpointError(f"unrecognized checkpoint header key: {key!r}")
    payload = blob[4 + header_len:]
    expected = sum(4 * int(np.prod(s, dtype=np.int64)) for _, s in shapes)
    if len(payload) != expected:
        raise CheckpointError(
            f"checkpoint payload is {len(payload)} bytes, expected {expected}"
        )
    params: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in shapes:
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        params[name] = arr.astype(np.float64).reshape(shape)
        offset += 4 * count
    return params, meta
