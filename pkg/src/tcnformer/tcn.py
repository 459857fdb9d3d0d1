"""Temporal convolutional front end: dilated causal residual blocks.

Input [batch, 1, time] -> stacked residual blocks -> [batch, channels, time],
length preserved throughout, nothing reads the future.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError
from .layers import BatchNorm1d, CausalConv1d, Dropout


def receptive_field(kernel_size: int, dilations: Sequence[int]) -> int:
    """Steps of history one output can see: each block stacks two convolutions
    of the same dilation, each adding (k-1)*d, plus the current step."""
    if kernel_size < 1 or any(d < 1 for d in dilations):
        raise ContractError("kernel size and dilations must be >= 1")
    return 1 + sum(2 * (kernel_size - 1) * d for d in dilations)


class ResidualBlock:
    """conv-BN-ReLU-dropout twice, plus a skip path (1x1 conv only when the
    channel count changes), joined by an output ReLU."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 dilation: int, dropout: float, rng: np.random.Generator,
                 dropout_seeds: tuple = (0, 1)):
        self.conv1 = CausalConv1d(in_channels, out_channels, kernel_size, dilation, rng)
        self.bn1 = BatchNorm1d(out_channels)
        self.drop1 = Dropout(dropout, dropout_seeds[0])
        self.conv2 = CausalConv1d(out_channels, out_channels, kernel_size, dilation, rng)
        self.bn2 = BatchNorm1d(out_channels)
        self.drop2 = Dropout(dropout, dropout_seeds[1])
        if in_channels != out_channels:
            self.downsample = CausalConv1d(in_channels, out_channels, 1, 1, rng)
        else:
            self.downsample = None
        self.dilation = dilation
        self.kernel_size = kernel_size

    def __call__(self, x: Tensor) -> Tensor:
        h = self.drop1(ad.relu(self.bn1(self.conv1(x))))
        h = self.drop2(ad.relu(self.bn2(self.conv2(h))))
        skip = x if self.downsample is None else self.downsample(x)
        return ad.relu(ad.add(h, skip))

    def set_training(self, flag: bool) -> None:
        self.bn1.training = flag
        self.bn2.training = flag
        self.drop1.training = flag
        self.drop2.training = flag

    def named_parameters(self, prefix: str = ""):
        yield from self.conv1.named_parameters(prefix + "conv1.")
        yield from self.bn1.named_parameters(prefix + "bn1.")
        yield from self.conv2.named_parameters(prefix + "conv2.")
        yield from self.bn2.named_parameters(prefix + "bn2.")
        if self.downsample is not None:
            yield from self.downsample.named_parameters(prefix + "downsample.")

    def named_buffers(self, prefix: str = ""):
        yield from self.bn1.named_buffers(prefix + "bn1.")
        yield from self.bn2.named_buffers(prefix + "bn2.")


class Tcn:
    """Stack of residual blocks with per-block dilations (e.g. 1, 2, 4)."""

    def __init__(self, in_channels: int, channels: int, kernel_size: int,
                 dilations: Sequence[int], dropout: float, rng: np.random.Generator,
                 dropout_seed_base=None):
        if not dilations:
            raise ContractError("at least one residual block is required")
        self.blocks: list[ResidualBlock] = []
        self.kernel_size = kernel_size
        self.dilations = tuple(int(d) for d in dilations)
        for i, d in enumerate(self.dilations):
            cin = in_channels if i == 0 else channels
            if dropout_seed_base is None:
                seeds = (2 * i, 2 * i + 1)
            else:
                seeds = dropout_seed_base.spawn(2)
            self.blocks.append(
                ResidualBlock(cin, channels, kernel_size, d, dropout, rng, seeds)
            )

    def __call__(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x

    def receptive_field(self) -> int:
        return receptive_field(self.kernel_size, self.dilations)

    def set_training(self, flag: bool) -> None:
        for block in self.blocks:
            block.set_training(flag)

    def named_parameters(self, prefix: str = ""):
        for i, block in enumerate(self.blocks):
            yield from block.named_parameters(f"{prefix}block{i}.")

    def named_buffers(self, prefix: str = ""):
        for i, block in enumerate(self.blocks):
            yield from block.named_buffers(f"{prefix}block{i}.")
