"""Multi-head attention under the three-block mask, in two interchangeable forms.

``dense`` scores every query against every key and masks afterwards.  ``block``
exploits the structure of the mask: a query in block b may read exactly the
keys of blocks 0..b, which form a prefix of the sequence, so each query block
is a plain (unmasked) attention against a key prefix.  The two agree to
rounding; the block form never does more multiply-adds.
"""

from __future__ import annotations

import math

import numpy as np

from .masking import BlockMaskSpec, build_block_mask
from .tensor.core import DimensionError, Tensor, make_result
from .tensor.ops import softmax_rows, softmax_vjp

VARIANTS = ("dense", "block")


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    b, n, d = x.shape
    return x.reshape(b, n, num_heads, d // num_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, n, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dh)


def _query_blocks(spec: BlockMaskSpec) -> list[tuple[int, int]]:
    return [(r0, r1) for r0, r1 in spec.bounds() if r1 > r0]


def dense_forward(q, k, v, spec):
    """Head-split arrays [B, H, L, dh] in, ([B, H, L, dh] out, probabilities)."""
    scale = 1.0 / math.sqrt(q.shape[-1])
    mask = build_block_mask(spec)
    p = softmax_rows(np.matmul(q, np.swapaxes(k, -1, -2)) * scale, mask)
    return np.matmul(p, v), p


def dense_backward(q, k, v, p, g):
    scale = 1.0 / math.sqrt(q.shape[-1])
    dv = np.matmul(np.swapaxes(p, -1, -2), g)
    ds = softmax_vjp(p, np.matmul(g, np.swapaxes(v, -1, -2))) * scale
    return np.matmul(ds, k), np.matmul(np.swapaxes(ds, -1, -2), q), dv


def block_forward(q, k, v, spec):
    scale = 1.0 / math.sqrt(q.shape[-1])
    out = np.empty_like(q)
    probs = []
    for r0, r1 in _query_blocks(spec):
        p = softmax_rows(np.matmul(q[..., r0:r1, :], np.swapaxes(k[..., :r1, :], -1, -2)) * scale, None)
        out[..., r0:r1, :] = np.matmul(p, v[..., :r1, :])
        probs.append(p)
    return out, probs


def block_backward(q, k, v, probs, g, spec):
    scale = 1.0 / math.sqrt(q.shape[-1])
    dq = np.empty_like(q)
    dk = np.zeros_like(k)
    dv = np.zeros_like(v)
    for (r0, r1), p in zip(_query_blocks(spec), probs):
        gb = g[..., r0:r1, :]
        dv[..., :r1, :] += np.matmul(np.swapaxes(p, -1, -2), gb)
        ds = softmax_vjp(p, np.matmul(gb, np.swapaxes(v[..., :r1, :], -1, -2))) * scale
        dq[..., r0:r1, :] = np.matmul(ds, k[..., :r1, :])
        dk[..., :r1, :] += np.matmul(np.swapaxes(ds, -1, -2), q[..., r0:r1, :])
    return dq, dk, dv


def attention_block_structured(q: np.ndarray, k: np.ndarray, v: np.ndarray, spec: BlockMaskSpec) -> np.ndarray:
    """Single-head attention on [..., L, d] arrays, visiting allowed key blocks only."""
    if q.shape[-2] != spec.total:
        raise DimensionError(f"sequence length {q.shape[-2]} does not match {spec}")
    return block_forward(q, k, v, spec)[0]


def attention_dense_masked(q: np.ndarray, k: np.ndarray, v: np.ndarray, spec: BlockMaskSpec) -> np.ndarray:
    if q.shape[-2] != spec.total:
        raise DimensionError(f"sequence length {q.shape[-2]} does not match {spec}")
    return dense_forward(q, k, v, spec)[0]


def attention(q: Tensor, k: Tensor, v: Tensor, spec: BlockMaskSpec, num_heads: int,
              variant: str = "block") -> Tensor:
    """Shared multi-head attention over [B, L, D] token matrices."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown attention variant {variant!r}; expected one of {VARIANTS}")
    if q.ndim != 3 or q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} must match as [B, L, D]")
    if q.shape[1] != spec.total:
        raise DimensionError(f"attention: sequence length {q.shape[1]} does not match {spec}")
    if q.shape[2] % num_heads:
        raise DimensionError(f"attention: model dim {q.shape[2]} not divisible by {num_heads} heads")

    qh, kh, vh = (_split_heads(t.data, num_heads) for t in (q, k, v))
    if variant == "dense":
        out, p = dense_forward(qh, kh, vh, spec)
    else:
        out, p = block_forward(qh, kh, vh, spec)

    def vjp(g):
        gh = _split_heads(g, num_heads)
        if variant == "dense":
            grads = dense_backward(qh, kh, vh, p, gh)
        else:
            grads = block_backward(qh, kh, vh, p, gh, spec)
        return [_merge_heads(x) for x in grads]

    return make_result(_merge_heads(out), (q, k, v), vjp)


def attention_macs(spec: BlockMaskSpec, head_dim: int, variant: str) -> int:
    """Scalar multiply-adds for one head's score and value products."""
    n = spec.total
    if variant == "dense":
        return 2 * n * n * head_dim
    if variant == "block":
        return sum(2 * (r1 - r0) * r1 * head_dim for r0, r1 in _query_blocks(spec))
    raise ValueError(f"unknown attention variant {variant!r}")
