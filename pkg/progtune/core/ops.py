"""Differentiable operations over :class:`Tensor`.

Every op computes its forward result with numpy and, when any operand requires
grad, records a :class:`Node` whose backward rule returns one gradient per
operand (``None`` for operands that take no gradient).
"""
from __future__ import annotations

import builtins
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractError, IndexOutOfRangeError, ShapeError
from .tensor import BackwardFn, Node, Tensor

Operand = Union[Tensor, float, int, np.ndarray]

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


def as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    if not builtins.any(t.requires_grad for t in inputs):
        return Tensor._from_op(data, None)
    return Tensor._from_op(data, Node(op=op, inputs=tuple(inputs), backward_fn=backward_fn))


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", out, (a, b), backward_fn)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record("sub", out, (a, b), backward_fn)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record("mul", out, (a, b), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` is either a plain [k×n] matrix applied to every leading row of ``a``,
    or has the same leading batch axes as ``a``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.shape} @ {b.shape}",
            {"left": list(a.shape), "right": list(b.shape)},
        )
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(
            f"matmul batch dimensions disagree: {a.shape} @ {b.shape}",
            {"left": list(a.shape), "right": list(b.shape)},
        )
    out = np.matmul(a.data, b.data)

    def backward_fn(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2:
            k, n = b.shape
            grad_b = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return grad_a, grad_b

    return _record("matmul", out, (a, b), backward_fn)


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    out = np.transpose(a.data, axes)

    def backward_fn(g):
        return (np.transpose(g, inverse),)

    return _record("transpose", out, (a,), backward_fn)


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    axes = list(range(a.ndim))
    axes[axis1], axes[axis2] = axes[axis2], axes[axis1]
    return transpose(a, axes)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    out = a.data.reshape(tuple(shape))

    def backward_fn(g):
        return (g.reshape(a.shape),)

    return _record("reshape", out, (a,), backward_fn)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = sorted(ax % a.ndim for ax in axes)
            for ax in axes:
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record("sum", out, (a,), backward_fn)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def select(a: Tensor, index: int, axis: int) -> Tensor:
    """Take one slice along ``axis`` (drops that axis)."""
    out = np.take(a.data, index, axis=axis)

    def backward_fn(g):
        grad = np.zeros_like(a.data)
        slicer = [slice(None)] * a.ndim
        slicer[axis] = index
        grad[tuple(slicer)] = g
        return (grad,)

    return _record("select", out, (a,), backward_fn)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward_fn(g):
        return (g * (1.0 - y * y),)

    return _record("tanh", y, (x,), backward_fn)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = as_tensor(x)
    u = _GELU_C * (x.data + _GELU_K * x.data ** 3)
    t = np.tanh(u)
    out = 0.5 * x.data * (1.0 + t)

    def backward_fn(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_K * x.data ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du),)

    return _record("gelu", out, (x,), backward_fn)


def softmax(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax over the last axis. ``mask`` is boolean, broadcastable to ``x``,
    True for positions that may receive probability mass. A row with nothing
    kept gets all-zero probabilities."""
    logits = x.data
    if mask is None:
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        y = e / e.sum(axis=-1, keepdims=True)
    else:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
        masked = np.where(keep, logits, -np.inf)
        top = masked.max(axis=-1, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        e = np.where(keep, np.exp(np.where(keep, logits - top, 0.0)), 0.0)
        total = e.sum(axis=-1, keepdims=True)
        y = np.divide(e, total, out=np.zeros_like(e), where=total > 0)

    def backward_fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record("softmax", y, (x,), backward_fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    if eps <= 0:
        raise ContractError("layer_norm eps must be positive", {"eps": eps})
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm width {d} does not match gamma {gamma.shape} / beta {beta.shape}",
            {"input": list(x.shape), "gamma": list(gamma.shape), "beta": list(beta.shape)},
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def backward_fn(g):
        lead = tuple(range(g.ndim - 1))
        grad_gamma = (g * xhat).sum(axis=lead)
        grad_beta = g.sum(axis=lead)
        dxhat = g * gamma.data
        grad_x = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return grad_x, grad_gamma, grad_beta

    return _record("layer_norm", out, (x, gamma, beta), backward_fn)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise IndexOutOfRangeError(
            f"token id outside [0, {vocab})",
            {"min_id": int(ids.min()), "max_id": int(ids.max()), "vocab_size": vocab},
        )
    out = table.data[ids]

    def backward_fn(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids, g)
        return (grad,)

    return _record("embedding", out, (table,), backward_fn)


def softmax_cross_entropy(
    logits: Tensor,
    targets: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """Mean negative log-likelihood of ``targets`` under softmax(``logits``).

    ``mask`` (boolean, same shape as ``logits``) removes classes from the
    normaliser; a masked-out target is an index error.
    """
    if logits.ndim != 2:
        raise ShapeError("cross entropy expects [batch × classes] logits", {"shape": list(logits.shape)})
    batch, classes = logits.shape
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.shape[0] != batch:
        raise ShapeError(
            f"{targets.shape[0]} targets for {batch} rows",
            {"logits": list(logits.shape), "targets": list(targets.shape)},
        )
    if targets.size and (targets.min() < 0 or targets.max() >= classes):
        raise IndexOutOfRangeError(
            f"target outside [0, {classes})",
            {"min_target": int(targets.min()), "max_target": int(targets.max()), "classes": classes},
        )
    rows = np.arange(batch)
    z = logits.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask[rows, targets].all():
            raise IndexOutOfRangeError("target falls on a masked position", {"classes": classes})
        z = np.where(mask, z, -np.inf)
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -log_probs[rows, targets].mean()

    def backward_fn(g):
        probs = np.exp(log_probs)
        probs[rows, targets] -= 1.0
        return (g * probs / batch,)

    return _record("cross_entropy", np.asarray(loss), (logits,), backward_fn)
