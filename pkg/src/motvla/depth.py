"""Depth-query distillation: synthetic teacher, cross-attention projection, L1 loss."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as te
from .model.config import NUM_VIEWS, ModelConfig
from .model.mot import MoTParams
from .tensor import Tensor

TEACHER_SEED = 20240601


def _grid(n: int) -> tuple[int, int]:
    rows = max(d for d in range(1, int(math.isqrt(n)) + 1) if n % d == 0)
    return rows, n // rows


def pool_views(images: np.ndarray, num_cells: int) -> np.ndarray:
    """Mean intensity over a rows x cols grid per view: [B, V, S, S] -> [B, V, num_cells]."""
    rows, cols = _grid(num_cells)
    r_edges = np.linspace(0, images.shape[-2], rows + 1).round().astype(int)
    c_edges = np.linspace(0, images.shape[-1], cols + 1).round().astype(int)
    out = np.empty(images.shape[:-2] + (rows * cols,))
    for i in range(rows):
        for j in range(cols):
            cell = images[..., r_edges[i] : r_edges[i + 1], c_edges[j] : c_edges[j + 1]]
            out[..., i * cols + j] = cell.mean(axis=(-2, -1))
    return out


def teacher_map(config: ModelConfig, seed: int = TEACHER_SEED) -> np.ndarray:
    """Fixed linear map from a pooled view grid to that view's depth tokens."""
    nq, dd = config.num_depth_queries_per_view, config.depth_token_dim
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / math.sqrt(max(nq, 1)), (nq * dd, nq))


def synthetic_depth_teacher(images, config: ModelConfig, seed: int = TEACHER_SEED) -> np.ndarray:
    """Deterministic stand-in depth tokens, [B, 3, n_queries, depth_token_dim].

    Accepts a single observation [3, S, S] as well, returning [3, n_queries, depth_token_dim].
    """
    images = np.asarray(images, dtype=np.float64)
    single = images.ndim == 3
    if single:
        images = images[None]
    if images.shape[1] != NUM_VIEWS:
        raise ValueError(f"expected {NUM_VIEWS} views, got {images.shape[1]}")
    nq, dd = config.num_depth_queries_per_view, config.depth_token_dim
    pooled = pool_views(images, nq)
    tokens = (pooled @ teacher_map(config, seed).T).reshape(images.shape[0], NUM_VIEWS, nq, dd)
    return tokens[0] if single else tokens


def project_queries(query_hidden: Tensor, params: MoTParams) -> Tensor:
    """Cross-attention from learnable seeds onto each view's query hidden states.

    ``query_hidden`` is [B, 3 * n_queries, D]; the result is
    [B, 3, n_queries, depth_token_dim].
    """
    cfg = params.config
    nq, d = cfg.num_depth_queries_per_view, cfg.model_dim
    b = query_hidden.shape[0]
    if query_hidden.shape[1:] != (NUM_VIEWS * nq, d):
        raise ValueError(f"query hidden states must be [B, {NUM_VIEWS * nq}, {d}], got {query_hidden.shape}")
    h = te.reshape(query_hidden, (b, NUM_VIEWS, nq, d))
    q = te.matmul(params["depth_proj.seeds"], params["depth_proj.wq"])
    k = te.matmul(h, params["depth_proj.wk"])
    v = te.matmul(h, params["depth_proj.wv"])
    scores = te.scale(te.matmul(q, te.transpose(k)), 1.0 / math.sqrt(d))
    attn = te.masked_softmax(scores, np.ones((nq, nq), dtype=bool))
    return te.matmul(te.matmul(attn, v), params["depth_proj.out"])


def distill_loss(projected: Tensor, depth_tokens) -> Tensor:
    """Mean absolute difference; teacher tokens are constants."""
    target = depth_tokens.data if isinstance(depth_tokens, Tensor) else np.asarray(depth_tokens)
    return te.l1_loss(projected, Tensor(target))


def total_loss(fm, distill, lambda_distill: float):
    if lambda_distill < 0:
        raise ValueError("lambda_distill must be nonnegative")
    if lambda_distill == 0:
        # dropping the term keeps the backward graph, and its summation order, identical to fm-only
        return fm
    if isinstance(fm, Tensor):
        return te.add(fm, te.scale(distill, lambda_distill))
    return fm + lambda_distill * distill
