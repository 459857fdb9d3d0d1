"""Trainable layers: causal dilated convolution, dense, batch norm, dropout.

Layers own their parameter Tensors and expose __call__ building graph nodes.
Stateful layers (batch norm, dropout) carry a `training` flag; switching to
eval makes them deterministic and side-effect free.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, _send
from .errors import ContractError, ShapeError


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = float(np.sqrt(1.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape)


def causal_dilated_conv1d(x: Tensor, weight: Tensor, bias: Tensor, dilation: int = 1) -> Tensor:
    """Length-preserving causal convolution.

    y[b, o, s] = bias[o] + sum_{i=0}^{k-1} sum_c weight[o, c, i] * x[b, c, s - dilation*i]

    with x zero-padded on the left by (k-1)*dilation, so position s never sees
    anything later than s.
    """
    if x.ndim != 3:
        raise ShapeError(f"conv input must be [batch, channels, time], got {x.shape}")
    if weight.ndim != 3:
        raise ShapeError(f"conv weight must be [out, in, kernel], got {weight.shape}")
    b, c_in, t = x.shape
    c_out, c_in_w, k = weight.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv expects {c_in_w} input channels, got {c_in}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv bias must have shape ({c_out},), got {bias.shape}")
    if dilation < 1 or k < 1:
        raise ContractError(f"kernel size and dilation must be >= 1, got k={k} d={dilation}")

    pad = (k - 1) * dilation
    xp = np.concatenate([np.zeros((b, c_in, pad)), x.data], axis=2)
    y = np.empty((b, c_out, t))
    y[:] = bias.data[None, :, None]
    # tap i reads the input shifted right by dilation*i
    for i in range(k):
        lo = pad - dilation * i
        y += np.einsum("oc,bct->bot", weight.data[:, :, i], xp[:, :, lo : lo + t])
    out = Tensor._node(y, (x, weight, bias), "causal_conv1d")

    def _back(g, flow):
        if bias.requires_grad:
            _send(flow, bias, g.sum(axis=(0, 2)))
        if weight.requires_grad:
            gw = np.empty_like(weight.data)
            for i in range(k):
                lo = pad - dilation * i
                gw[:, :, i] = np.einsum("bot,bct->oc", g, xp[:, :, lo : lo + t])
            _send(flow, weight, gw)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(k):
                lo = pad - dilation * i
                gxp[:, :, lo : lo + t] += np.einsum("oc,bot->bct", weight.data[:, :, i], g)
            _send(flow, x, gxp[:, :, pad:])

    out._backward = _back
    return out


class CausalConv1d:
    """Causal dilated 1-D convolution with its own weight/bias."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 dilation: int = 1, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * kernel_size
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.weight = Tensor(uniform_init(rng, (out_channels, in_channels, kernel_size), fan_in),
                             requires_grad=True)
        self.bias = Tensor(uniform_init(rng, (out_channels,), fan_in), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return causal_dilated_conv1d(x, self.weight, self.bias, self.dilation)

    def named_parameters(self, prefix: str = ""):
        yield prefix + "weight", self.weight
        yield prefix + "bias", self.bias


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map on the last axis: x[.., in] @ weight[in, out] + bias[out]."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"dense expects {weight.shape[0]} input features, got {x.shape}")
    out = ad.add(ad.matmul(x, weight), bias)
    out._op = "dense"
    return out


class Dense:
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor(uniform_init(rng, (in_features, out_features), in_features),
                             requires_grad=True)
        self.bias = Tensor(uniform_init(rng, (out_features,), in_features), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.weight, self.bias)

    def named_parameters(self, prefix: str = ""):
        yield prefix + "weight", self.weight
        yield prefix + "bias", self.bias


class BatchNorm1d:
    """Per-channel batch normalization over the batch and time axes of
    [batch, channels, time] inputs, with EMA running statistics for eval.

    Population variance everywhere (normalization, backward, running stats).
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.training = True

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ShapeError(
                f"batch norm expects [batch, {self.channels}, time], got {x.shape}"
            )
        b, c, t = x.shape
        gamma, beta = self.gamma, self.beta
        if self.training:
            n = b * t
            if n < 2:
                raise ContractError(
                    f"batch norm in training mode needs batch*time >= 2, got {n}"
                )
            mean = x.data.mean(axis=(0, 2))
            var = x.data.var(axis=(0, 2))
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x.data - mean[None, :, None]) * inv[None, :, None]
        y = gamma.data[None, :, None] * xhat + beta.data[None, :, None]
        out = Tensor._node(y, (x, gamma, beta), "batch_norm1d")
        in_training = self.training

        def _back(g, flow):
            _send(flow, gamma, (g * xhat).sum(axis=(0, 2)))
            _send(flow, beta, g.sum(axis=(0, 2)))
            if not x.requires_grad:
                return
            dxhat = g * gamma.data[None, :, None]
            if in_training:
                m1 = dxhat.mean(axis=(0, 2))[None, :, None]
                m2 = (dxhat * xhat).mean(axis=(0, 2))[None, :, None]
                _send(flow, x, (dxhat - m1 - xhat * m2) * inv[None, :, None])
            else:
                _send(flow, x, dxhat * inv[None, :, None])

        out._backward = _back
        return out

    def named_parameters(self, prefix: str = ""):
        yield prefix + "gamma", self.gamma
        yield prefix + "beta", self.beta

    def named_buffers(self, prefix: str = ""):
        yield prefix + "running_mean", self.running_mean
        yield prefix + "running_var", self.running_var

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        if name == "running_mean":
            self.running_mean = np.asarray(value, dtype=np.float64).copy()
        elif name == "running_var":
            self.running_var = np.asarray(value, dtype=np.float64).copy()
        else:  # pragma: no cover - guarded by checkpoint restore
            raise KeyError(name)


class Dropout:
    """Inverted dropout: keep with probability 1-rate, rescale by 1/(1-rate).

    Eval mode (or rate 0) is the identity and draws nothing from the rng, so
    validation passes never perturb the training random stream.
    """

    def __init__(self, rate: float, seed: int | np.random.SeedSequence = 0):
        if not 0.0 <= rate < 1.0:
            raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng(seed)
        self.training = True

    def __call__(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            return x
        keep = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        out = ad.mul(x, Tensor(keep))
        out._op = "dropout"
        return out


class LayerNorm:
    """Last-axis layer normalization with learned gamma/beta."""

    def __init__(self, channels: int, eps: float = 1e-5):
        self.channels = channels
        self.eps = eps
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gamma, self.beta, self.eps)

    def named_parameters(self, prefix: str = ""):
        yield prefix + "gamma", self.gamma
        yield prefix + "beta", self.beta
