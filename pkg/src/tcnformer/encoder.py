"""Transformer encoder built from windowed causal attention and external
memory, glued by kernel-1 convolutions and layer norms.

Per layer, with x in [batch, time, channels]:

    sub-layer 1:  u = LN1(drop(attn1(x))) + conv1(x)
    sub-layer 2:  z = relu(conv2(u))
                  v = LN2(drop(tea(z)))
                  out = LN3(conv3(v)) + u

attn1 is windowed causal self-attention (window widening with depth) and the
second reader is the external memory; the ablation harness swaps either for
standard global self-attention. No positional encodings anywhere — order
information comes from the causal convolutions and the attention masks.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError
from .layers import CausalConv1d, Dropout, LayerNorm
from .attention import ExternalMemory, GlobalSelfAttention, WindowedCausalSelfAttention

SUBLAYER1_KINDS = ("ctmsa", "msa")
SUBLAYER2_KINDS = ("tea", "msa")


def _pointwise(conv: CausalConv1d, x: Tensor) -> Tensor:
    # kernel-1 conv over time, applied to [batch, time, channels]
    return ad.permute(conv(ad.permute(x, 0, 2, 1)), 0, 2, 1)


class EncoderLayer:
    def __init__(self, channels: int, heads: int, window: int, memory_slots: int,
                 dropout: float, rng: np.random.Generator,
                 sublayer1: str = "ctmsa", sublayer2: str = "tea",
                 dropout_seeds: Sequence = (0, 1, 2, 3)):
        if sublayer1 not in SUBLAYER1_KINDS:
            raise ContractError(f"sublayer1 must be one of {SUBLAYER1_KINDS}, got {sublayer1!r}")
        if sublayer2 not in SUBLAYER2_KINDS:
            raise ContractError(f"sublayer2 must be one of {SUBLAYER2_KINDS}, got {sublayer2!r}")
        self.channels = channels
        self.window = window
        self.sublayer1 = sublayer1
        self.sublayer2 = sublayer2
        if sublayer1 == "ctmsa":
            self.attn1 = WindowedCausalSelfAttention(
                channels, heads, window, dropout=dropout, rng=rng, dropout_seed=dropout_seeds[0]
            )
        else:
            self.attn1 = GlobalSelfAttention(
                channels, heads, dropout=dropout, rng=rng, dropout_seed=dropout_seeds[0]
            )
        if sublayer2 == "tea":
            self.reader = ExternalMemory(channels, memory_slots, rng=rng)
        else:
            self.reader = GlobalSelfAttention(
                channels, heads, dropout=dropout, rng=rng, dropout_seed=dropout_seeds[3]
            )
        self.conv1 = CausalConv1d(channels, channels, 1, 1, rng)
        self.conv2 = CausalConv1d(channels, channels, 1, 1, rng)
        self.conv3 = CausalConv1d(channels, channels, 1, 1, rng)
        self.ln1 = LayerNorm(channels)
        self.ln2 = LayerNorm(channels)
        self.ln3 = LayerNorm(channels)
        self.drop1 = Dropout(dropout, dropout_seeds[1])
        self.drop2 = Dropout(dropout, dropout_seeds[2])

    def __call__(self, x: Tensor) -> Tensor:
        u = ad.add(self.ln1(self.drop1(self.attn1(x))), _pointwise(self.conv1, x))
        z = ad.relu(_pointwise(self.conv2, u))
        v = self.ln2(self.drop2(self.reader(z)))
        return ad.add(self.ln3(_pointwise(self.conv3, v)), u)

    def set_training(self, flag: bool) -> None:
        self.attn1.set_training(flag)
        self.reader.set_training(flag)
        self.drop1.training = flag
        self.drop2.training = flag

    def named_parameters(self, prefix: str = ""):
        attn1_name = "ctmsa" if self.sublayer1 == "ctmsa" else "msa1"
        yield from self.attn1.named_parameters(f"{prefix}{attn1_name}.")
        reader_name = "tea" if self.sublayer2 == "tea" else "msa2"
        yield from self.reader.named_parameters(f"{prefix}{reader_name}.")
        for i, conv in enumerate((self.conv1, self.conv2, self.conv3), start=1):
            yield from conv.named_parameters(f"{prefix}conv{i}.")
        for i, ln in enumerate((self.ln1, self.ln2, self.ln3), start=1):
            yield from ln.named_parameters(f"{prefix}ln{i}.")


class EncoderStack:
    """N encoder layers; window widths are given per layer (progressively
    wider by default so early layers look locally, later layers further back)."""

    def __init__(self, channels: int, heads: int, windows: Sequence[int], memory_slots: int,
                 dropout: float, rng: np.random.Generator,
                 sublayer1: str = "ctmsa", sublayer2: str = "tea",
                 dropout_seed_base=None):
        if not windows:
            raise ContractError("encoder stack needs at least one layer")
        self.layers: list[EncoderLayer] = []
        for i, w in enumerate(windows):
            if dropout_seed_base is None:
                seeds = tuple(4 * i + j for j in range(4))
            else:
                seeds = dropout_seed_base.spawn(4)
            self.layers.append(
                EncoderLayer(channels, heads, int(w), memory_slots, dropout, rng,
                             sublayer1=sublayer1, sublayer2=sublayer2, dropout_seeds=seeds)
            )

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def set_training(self, flag: bool) -> None:
        for layer in self.layers:
            layer.set_training(flag)

    def named_parameters(self, prefix: str = ""):
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}layer{i}.")
