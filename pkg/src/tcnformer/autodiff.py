"""Reverse-mode autodiff on numpy arrays.

A Tensor wraps a float64 ndarray (row-major) plus an optional gradient and a
backpointer into the computation graph. Each op builds the output tensor and
attaches a rule that routes the output gradient to the inputs; backward()
walks the graph once in reverse topological order, carrying per-call
gradients in a scratch map, then adds the result into ``grad`` of every
requires_grad ancestor (so repeated backward calls accumulate exactly).

Broadcasting is numpy-style but intended only for leading batch axes and
explicit size-1 axes; anything else should be reshaped by the caller.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, InvalidMaskError, ShapeError

# a backward rule receives (upstream gradient, flow map) and deposits
# contributions for its parents into the flow map via _send
_BackRule = Callable[[np.ndarray, dict], None]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: _BackRule | None = None
        self._op = ""

    # -- construction of graph nodes -------------------------------------

    @staticmethod
    def _node(data: np.ndarray, parents: Sequence["Tensor"], op: str) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        out.requires_grad = any(p.requires_grad for p in parents)
        out.grad = None
        out._parents = tuple(parents)
        out._backward = None
        out._op = op
        return out

    # -- basic introspection ----------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self._op!r})"

    def zero_grad(self) -> None:
        self.grad = None

    # -- gradient plumbing --------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar; adds this call's gradient into
        ``grad`` of every requires_grad ancestor (leaves and intermediates)."""
        if self.data.size != 1:
            raise ContractError(
                f"backward() expects a scalar loss, got shape {self.shape}"
            )
        if not self.requires_grad:
            raise ContractError("backward() on a tensor that requires no gradient")
        order = _toposort(self)
        flow: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in order:
            g = flow.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                node._backward(g, flow)
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), scale(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def relu(self):
        return relu(self)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def permute(self, *axes):
        return permute(self, *axes)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _toposort(root: Tensor) -> list[Tensor]:
    """Children-first order: reversed post-order DFS over parent edges."""
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    topo.reverse()
    return topo


def _send(flow: dict, t: Tensor, g: np.ndarray) -> None:
    """Deposit a gradient contribution for t into the per-call flow map."""
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    cur = flow.get(id(t))
    if cur is None:
        flow[id(t)] = np.array(g)  # private copy; later contributions add in place
    else:
        cur += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra < 0:
        raise ShapeError(f"gradient of shape {g.shape} narrower than operand {shape}")
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    squeeze = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if squeeze:
        g = g.sum(axis=squeeze, keepdims=True)
    if g.shape != shape:
        raise ShapeError(f"cannot reduce gradient {g.shape} to operand shape {shape}")
    return g


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not align") from None


# -- elementwise ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "add")
    out = Tensor._node(a.data + b.data, (a, b), "add")

    def _back(g, flow):
        _send(flow, a, g)
        _send(flow, b, g)

    out._backward = _back
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "mul")
    out = Tensor._node(a.data * b.data, (a, b), "mul")

    def _back(g, flow):
        _send(flow, a, g * b.data)
        _send(flow, b, g * a.data)

    out._backward = _back
    return out


def scale(x, s: float) -> Tensor:
    x = _as_tensor(x)
    s = float(s)
    out = Tensor._node(x.data * s, (x,), "scale")

    def _back(g, flow):
        _send(flow, x, g * s)

    out._backward = _back
    return out


def relu(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor._node(np.maximum(x.data, 0.0), (x,), "relu")

    def _back(g, flow):
        _send(flow, x, g * (x.data > 0.0))

    out._backward = _back
    return out


# -- shape manipulation ----------------------------------------------------


def reshape(x: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = x.data.shape
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {old} into {shape}") from None
    out = Tensor._node(data, (x,), "reshape")

    def _back(g, flow):
        _send(flow, x, g.reshape(old))

    out._backward = _back
    return out


def permute(x: Tensor, *axes) -> Tensor:
    if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute axes {axes} invalid for ndim {x.ndim}")
    inverse = tuple(int(i) for i in np.argsort(axes))
    out = Tensor._node(x.data.transpose(axes), (x,), "permute")

    def _back(g, flow):
        _send(flow, x, g.transpose(inverse))

    out._backward = _back
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ContractError("concat of zero tensors")
    tensors = [_as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    out = Tensor._node(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def _back(g, flow):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _send(flow, t, g[tuple(idx)])

    out._backward = _back
    return out


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)
    out = Tensor._node(data, (x,), "sum")
    axes = _normalize_axes(axis, x.ndim)

    def _back(g, flow):
        if not keepdims and axes is not None:
            g = np.expand_dims(g, axes)
        _send(flow, x, np.broadcast_to(g, x.data.shape))

    out._backward = _back
    return out


def tensor_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    if axes is None:
        count = x.size
    else:
        count = int(np.prod([x.data.shape[i] for i in axes]))
    return scale(tensor_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def _normalize_axes(axis, ndim) -> tuple[int, ...] | None:
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


# -- linear algebra ---------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    _check_broadcast(a.data[..., :1, :1], b.data[..., :1, :1], "matmul batch dims")
    out = Tensor._node(np.matmul(a.data, b.data), (a, b), "matmul")

    def _back(g, flow):
        _send(flow, a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        _send(flow, b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    out._backward = _back
    return out


# -- softmax and normalization ----------------------------------------------


def masked_softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis. mask (broadcastable, True = allowed) forces
    disallowed entries to exactly zero; a row with nothing allowed is an error."""
    x = _as_tensor(x)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not mask.any(axis=-1).all():
            raise InvalidMaskError("softmax row with every position masked")
        z = np.where(mask, z, -np.inf)
    zmax = z.max(axis=-1, keepdims=True)
    e = np.exp(z - zmax)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor._node(p, (x,), "masked_softmax")

    def _back(g, flow):
        dot = (g * p).sum(axis=-1, keepdims=True)
        _send(flow, x, p * (g - dot))

    out._backward = _back
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (population),
    then scale by gamma and shift by beta."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"layer_norm affine params must have shape ({c},), got {gamma.shape} and {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor._node(gamma.data * xhat + beta.data, (x, gamma, beta), "layer_norm")

    def _back(g, flow):
        _send(flow, gamma, (g * xhat).reshape(-1, c).sum(axis=0))
        _send(flow, beta, g.reshape(-1, c).sum(axis=0))
        dxhat = g * gamma.data
        term = dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(
            axis=-1, keepdims=True
        )
        _send(flow, x, term * inv)

    out._backward = _back
    return out


# -- finite differences -------------------------------------------------------


def finite_diff_grad(f: Callable[[Tensor], "Tensor | float"], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f at x; the independent oracle
    the analytic backward pass is tested against."""
    flat = x.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        fp = _scalar(f(x))
        flat[i] = keep - h
        fm = _scalar(f(x))
        flat[i] = keep
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.data.shape)


def _scalar(v) -> float:
    if isinstance(v, Tensor):
        return v.item()
    return float(v)


def grad_check_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Scaled L2 distance used by the gradient test suite."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = max(float(np.linalg.norm(a) + np.linalg.norm(n)), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def parameters_norm(grads: Iterable[np.ndarray]) -> float:
    """Global L2 norm across a collection of gradient arrays."""
    total = 0.0
    for g in grads:
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def graph_ancestors(t: Tensor) -> list[Tensor]:
    """Every node reachable from t through parent edges, t excluded.
    Used by structural audits (e.g. proving the forecast head never feeds
    back into the graph that produced it)."""
    seen: set[int] = {id(t)}
    out: list[Tensor] = []
    stack = list(t._parents)
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        out.append(node)
        stack.extend(node._parents)
    return out
