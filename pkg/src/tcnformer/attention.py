"""Attention blocks: windowed causal multi-head self-attention, standard
multi-head self-attention, and slot-based external-memory attention.

The windowed variant restricts each position to earlier positions inside its
own non-overlapping window of width W, and computes scores per window, so the
score cost is O(T*W*C) rather than O(T^2*C). Module-level counters record the
exact multiply-accumulate count of every score contraction; the complexity
tests read them.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ShapeError
from .layers import Dropout, uniform_init


class MacCounter:
    """Counts attention-score multiply-accumulates (Q @ K^T contractions)."""

    def __init__(self):
        self.score_macs = 0

    def reset(self) -> None:
        self.score_macs = 0


counters = MacCounter()


def causal_window_mask(t: int, window: int) -> np.ndarray:
    """Boolean [t, t] mask: (i, j) allowed iff i and j share the same
    non-overlapping window of width `window` and j <= i."""
    if window < 1:
        raise ContractError(f"window must be >= 1, got {window}")
    if t % window != 0:
        raise ContractError(f"sequence length {t} is not divisible by window {window}")
    idx = np.arange(t)
    same_window = (idx[:, None] // window) == (idx[None, :] // window)
    causal = idx[None, :] <= idx[:, None]
    return same_window & causal


class _MultiHeadCore:
    """Shared projection machinery for the self-attention variants."""

    def __init__(self, channels: int, heads: int, alpha: float | None,
                 dropout: float, rng: np.random.Generator, dropout_seed=0):
        if channels % heads != 0:
            raise ContractError(f"channels {channels} not divisible by heads {heads}")
        self.channels = channels
        self.heads = heads
        self.head_dim = channels // heads
        self.alpha = float(alpha) if alpha is not None else 1.0 / np.sqrt(self.head_dim)
        self.w_q = [Tensor(uniform_init(rng, (channels, self.head_dim), channels), requires_grad=True)
                    for _ in range(heads)]
        self.w_k = [Tensor(uniform_init(rng, (channels, self.head_dim), channels), requires_grad=True)
                    for _ in range(heads)]
        self.w_v = [Tensor(uniform_init(rng, (channels, self.head_dim), channels), requires_grad=True)
                    for _ in range(heads)]
        self.w_out = Tensor(uniform_init(rng, (channels, channels), channels), requires_grad=True)
        self.attn_dropout = Dropout(dropout, dropout_seed)

    def set_training(self, flag: bool) -> None:
        self.attn_dropout.training = flag

    def named_parameters(self, prefix: str = ""):
        for h in range(self.heads):
            yield f"{prefix}h{h}.wq", self.w_q[h]
            yield f"{prefix}h{h}.wk", self.w_k[h]
            yield f"{prefix}h{h}.wv", self.w_v[h]
        yield prefix + "wout", self.w_out

    def _check_input(self, x: Tensor) -> tuple[int, int, int]:
        if x.ndim != 3:
            raise ShapeError(f"attention input must be [batch, time, channels], got {x.shape}")
        b, t, c = x.shape
        if c != self.channels:
            raise ShapeError(f"attention expects {self.channels} channels, got {c}")
        return b, t, c


class WindowedCausalSelfAttention(_MultiHeadCore):
    """Multi-head self-attention restricted to causal positions within
    non-overlapping windows of width `window` (scores computed per window)."""

    def __init__(self, channels: int, heads: int, window: int, alpha: float | None = None,
                 dropout: float = 0.0, rng: np.random.Generator | None = None, dropout_seed=0):
        rng = rng if rng is not None else np.random.default_rng(0)
        super().__init__(channels, heads, alpha, dropout, rng, dropout_seed)
        if window < 1:
            raise ContractError(f"window must be >= 1, got {window}")
        self.window = window

    def __call__(self, x: Tensor, return_weights: bool = False):
        b, t, _ = self._check_input(x)
        w = self.window
        if t % w != 0:
            raise ContractError(f"sequence length {t} is not divisible by window {w}")
        nw = t // w
        idx = np.arange(w)
        in_window_mask = idx[None, :] <= idx[:, None]  # lower triangle [w, w]

        head_outputs = []
        weights = []
        for h in range(self.heads):
            q = ad.reshape(ad.matmul(x, self.w_q[h]), (b, nw, w, self.head_dim))
            k = ad.reshape(ad.matmul(x, self.w_k[h]), (b, nw, w, self.head_dim))
            v = ad.reshape(ad.matmul(x, self.w_v[h]), (b, nw, w, self.head_dim))
            scores = ad.scale(ad.matmul(q, ad.permute(k, 0, 1, 3, 2)), self.alpha)
            counters.score_macs += b * nw * w * w * self.head_dim
            probs = ad.masked_softmax(scores, in_window_mask)
            if return_weights:
                weights.append(probs.data)
            probs = self.attn_dropout(probs)
            ctx = ad.matmul(probs, v)  # [b, nw, w, head_dim]
            head_outputs.append(ad.reshape(ctx, (b, t, self.head_dim)))
        out = ad.matmul(ad.concat(head_outputs, axis=-1), self.w_out)
        if return_weights:
            return out, self._assemble_full_maps(weights, b, t)
        return out

    def _assemble_full_maps(self, per_window: list[np.ndarray], b: int, t: int) -> np.ndarray:
        """Embed per-window probabilities into full [heads, b, t, t] maps
        (block-diagonal); test/inspection path only."""
        w = self.window
        full = np.zeros((self.heads, b, t, t))
        for h, blocks in enumerate(per_window):
            for wi in range(t // w):
                lo = wi * w
                full[h, :, lo : lo + w, lo : lo + w] = blocks[:, wi]
        return full


class GlobalSelfAttention(_MultiHeadCore):
    """Conventional multi-head self-attention over the whole sequence,
    no mask and no windows; the ablation harness swaps this in."""

    def __init__(self, channels: int, heads: int, alpha: float | None = None,
                 dropout: float = 0.0, rng: np.random.Generator | None = None, dropout_seed=0):
        rng = rng if rng is not None else np.random.default_rng(0)
        super().__init__(channels, heads, alpha, dropout, rng, dropout_seed)

    def __call__(self, x: Tensor, return_weights: bool = False):
        b, t, _ = self._check_input(x)
        head_outputs = []
        weights = []
        for h in range(self.heads):
            q = ad.matmul(x, self.w_q[h])
            k = ad.matmul(x, self.w_k[h])
            v = ad.matmul(x, self.w_v[h])
            scores = ad.scale(ad.matmul(q, ad.permute(k, 0, 2, 1)), self.alpha)
            counters.score_macs += b * t * t * self.head_dim
            probs = ad.masked_softmax(scores)
            if return_weights:
                weights.append(probs.data)
            probs = self.attn_dropout(probs)
            head_outputs.append(ad.matmul(probs, v))
        out = ad.matmul(ad.concat(head_outputs, axis=-1), self.w_out)
        if return_weights:
            return out, np.stack(weights)
        return out


class ExternalMemory:
    """Attention against two learned slot matrices instead of the sequence.

    scores = x @ M_k^T, normalized over the L slots per time step, then read
    out of M_v. Parameter count is independent of sequence length; the slots
    are ordinary trainable tensors updated by the optimizer like any weight.
    """

    def __init__(self, channels: int, slots: int, rng: np.random.Generator | None = None):
        if slots < 1:
            raise ContractError(f"memory needs at least one slot, got {slots}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.channels = channels
        self.slots = slots
        self.m_k = Tensor(rng.normal(0.0, 0.02, size=(slots, channels)), requires_grad=True)
        self.m_v = Tensor(rng.normal(0.0, 0.02, size=(slots, channels)), requires_grad=True)

    def __call__(self, x: Tensor, return_weights: bool = False):
        if x.ndim != 3 or x.shape[-1] != self.channels:
            raise ShapeError(
                f"external memory expects [batch, time, {self.channels}], got {x.shape}"
            )
        scores = ad.matmul(x, ad.permute(self.m_k, 1, 0))  # [b, t, slots]
        probs = ad.masked_softmax(scores)
        out = ad.matmul(probs, self.m_v)  # [b, t, channels]
        if return_weights:
            return out, probs.data
        return out

    def set_training(self, flag: bool) -> None:  # stateless; kept for symmetry
        return None

    def named_parameters(self, prefix: str = ""):
        yield prefix + "mk", self.m_k
        yield prefix + "mv", self.m_v
