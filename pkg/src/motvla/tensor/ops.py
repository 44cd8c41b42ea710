"""The fixed differentiable op set.

Every op takes and returns :class:`Tensor` objects and records a local
vector-Jacobian product when any input requires a gradient.  Broadcasting is
supported only where the model needs it (bias and gain vectors against token
matrices, a shared weight matrix against a batch of token matrices).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import DimensionError, MaskError, Tensor, as_tensor, make_result


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return make_result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return make_result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return make_result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a Python constant."""
    c = float(c)
    return make_result(a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` may be a plain matrix shared across the leading (batch) axes of
    ``a``, or both operands may carry broadcast-compatible batch axes.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def vjp(g):
        da = db = None
        if a.requires_grad:
            da = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                k, n = b.shape
                db = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                db = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return da, db

    return make_result(out, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    return make_result(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {old} as {tuple(shape)}") from None
    return make_result(out, (a,), lambda g: (g.reshape(old),))


def broadcast(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Repeat ``a`` along new or unit leading axes to ``shape``."""
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise DimensionError(f"broadcast: cannot expand {a.shape} to {shape}") from None
    return make_result(out, (a,), lambda g: (_unbroadcast(g, a.shape),))


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = axis % a.ndim
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def vjp(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return make_result(a.data[index], (a,), vjp)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    nd = parts[0].ndim
    axis = axis % nd
    for p in parts[1:]:
        if p.ndim != nd or any(p.shape[i] != parts[0].shape[i] for i in range(nd) if i != axis):
            raise DimensionError(
                f"concat: shapes {[q.shape for q in parts]} differ off axis {axis}"
            )
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def vjp(g):
        out = []
        for i in range(len(parts)):
            index = [slice(None)] * nd
            index[axis] = slice(bounds[i], bounds[i + 1])
            out.append(g[tuple(index)])
        return out

    return make_result(np.concatenate([p.data for p in parts], axis=axis), parts, vjp)


def total(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar."""
    return make_result(np.asarray(a.data.sum()), (a,), lambda g: (np.full(a.shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    return make_result(np.asarray(a.data.mean()), (a,), lambda g: (np.full(a.shape, float(g) / n),))


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; ``ids`` is an integer array of any shape."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"embedding: token id out of range [0, {table.shape[0]}): "
            f"min {ids.min()}, max {ids.max()}"
        )

    def vjp(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (dt,)

    return make_result(table.data[ids], (table,), vjp)


def softmax_rows(logits: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    """Numerically stable softmax over the last axis, zero where masked."""
    if mask is None:
        shifted = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    if not mask.any(axis=-1).all():
        raise MaskError("masked_softmax: a row has no allowed position")
    row_max = np.where(mask, logits, -np.inf).max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(np.where(mask, logits - row_max, 0.0)), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_vjp(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    return p * (g - (g * p).sum(axis=-1, keepdims=True))


def masked_softmax(logits: Tensor, mask) -> Tensor:
    """Softmax over the last axis restricted to positions where ``mask`` is true."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 0 or mask.shape != logits.shape[-mask.ndim :]:
        raise DimensionError(f"masked_softmax: mask {mask.shape} vs logits {logits.shape}")
    p = softmax_rows(logits.data, mask)
    return make_result(p, (logits,), lambda g: (softmax_vjp(p, g),))


def rms_norm(x: Tensor, gain: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalise the last axis by its root mean square, then apply ``gain``."""
    if gain.ndim != 1 or gain.shape[0] != x.shape[-1]:
        raise DimensionError(f"rms_norm: gain {gain.shape} vs input {x.shape}")
    if eps <= 0:
        raise ValueError("rms_norm: eps must be positive")
    d = x.shape[-1]
    inv = 1.0 / np.sqrt(np.mean(x.data * x.data, axis=-1, keepdims=True) + eps)
    xhat = x.data * inv

    def vjp(g):
        dxhat = g * gain.data
        dx = inv * (dxhat - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / d)
        dg = (g * xhat).reshape(-1, d).sum(axis=0)
        return dx, dg

    return make_result(xhat * gain.data, (x, gain), vjp)


def silu(x: Tensor) -> Tensor:
    sig = expit(x.data)
    return make_result(
        x.data * sig, (x,), lambda g: (g * sig * (1.0 + x.data * (1.0 - sig)),)
    )


def _check_same(pred: Tensor, target: Tensor, op: str) -> None:
    if pred.shape != target.shape:
        raise DimensionError(f"{op}: prediction {pred.shape} vs target {target.shape}")


def mse_loss(pred: Tensor, target) -> Tensor:
    target = as_tensor(target)
    _check_same(pred, target, "mse_loss")
    diff = pred.data - target.data
    n = diff.size
    return make_result(
        np.asarray(np.mean(diff * diff)),
        (pred, target),
        lambda g: (g * 2.0 * diff / n, -g * 2.0 * diff / n),
    )


def l1_loss(pred: Tensor, target) -> Tensor:
    target = as_tensor(target)
    _check_same(pred, target, "l1_loss")
    diff = pred.data - target.data
    n = diff.size
    sign = np.sign(diff)
    return make_result(
        np.asarray(np.mean(np.abs(diff))),
        (pred, target),
        lambda g: (g * sign / n, -g * sign / n),
    )
