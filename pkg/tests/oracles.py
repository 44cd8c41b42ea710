"""Independent plain-numpy references used by the tests."""

from __future__ import annotations

import numpy as np

from motvla.model import NUM_VIEWS, ModelConfig, MoTParams, patchify, time_features
from motvla.tensor import Tensor, backward

TINY = dict(model_dim=4, num_layers=2, num_heads=2, mlp_hidden_dim=6, image_size=8, patch_size=4,
            vocab_size=5, max_text_len=3, state_dim=3, action_dim=2, chunk_length=3,
            num_depth_queries_per_view=2, depth_token_dim=2, time_features=4)


def tiny_config(**overrides) -> ModelConfig:
    return ModelConfig(**{**TINY, **overrides})


def random_inputs(cfg: ModelConfig, batch: int, rng: np.random.Generator, n_text: int | None = None):
    n_text = cfg.max_text_len if n_text is None else n_text
    s = cfg.image_size
    return (rng.uniform(0, 1, (batch, NUM_VIEWS, s, s)),
            rng.integers(0, cfg.vocab_size, (batch, n_text)),
            rng.standard_normal((batch, cfg.state_dim)),
            rng.standard_normal((batch, cfg.chunk_length, cfg.action_dim)),
            rng.uniform(0, 1, batch))


def brute_force_mask(obs: int, state: int, action: int) -> np.ndarray:
    """Same-block pairs are allowed; a later block may read any earlier one."""
    block = [0] * obs + [1] * state + [2] * action
    n = len(block)
    m = np.zeros((n, n), dtype=bool)
    for q in range(n):
        for k in range(n):
            if block[q] == block[k] or block[k] < block[q]:
                m[q, k] = True
    return m


def _rms(x, g, eps):
    return g * x / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + eps)


def _silu(x):
    return x / (1.0 + np.exp(-x))


def unified_reference(params: MoTParams, images, ids, state, noisy, s) -> np.ndarray:
    """One transformer over the whole sequence using the observation weights everywhere."""
    cfg = params.config
    p = {k: t.data for k, t in params.tensors.items()}
    b = images.shape[0]
    d, nh = cfg.model_dim, cfg.num_heads
    dh = d // nh
    ppv = cfg.patches_per_view
    img = patchify(images, cfg.patch_size) @ p["patch_embed.w"] + p["patch_embed.b"]
    img = img + np.repeat(p["view_embed"], ppv, axis=0) + np.tile(p["patch_pos"], (NUM_VIEWS, 1))
    text = p["text_embed"][ids] + p["text_pos"][: ids.shape[1]]
    depth = np.broadcast_to(p["depth_queries"], (b,) + p["depth_queries"].shape)
    st = (state @ p["state_proj.w"] + p["state_proj.b"])[:, None]
    feats = time_features(np.asarray(s), cfg.time_features)[:, None]
    act = noisy @ p["action_in.w"] + p["action_in.b"] + p["action_pos"] + feats @ p["time_proj.w"] + p["time_proj.b"]
    x = np.concatenate([img, text, depth, st, act], axis=1)
    n_obs = img.shape[1] + text.shape[1] + depth.shape[1]
    mask = brute_force_mask(n_obs, 1, cfg.chunk_length)
    L = x.shape[1]
    for i in range(cfg.num_layers):
        w = lambda n: p[f"obs.{i}.{n}"]  # noqa: E731
        h = _rms(x, w("attn_norm"), cfg.norm_eps)
        q, k, v = (np.swapaxes((h @ w(n)).reshape(b, L, nh, dh), 1, 2) for n in ("wq", "wk", "wv"))
        sc = q @ np.swapaxes(k, -1, -2) / np.sqrt(dh)
        sc = np.where(mask, sc, -np.inf)
        sc = np.exp(sc - sc.max(-1, keepdims=True))
        att = (sc / sc.sum(-1, keepdims=True)) @ v
        x = x + np.swapaxes(att, 1, 2).reshape(b, L, d) @ w("wo")
        h = _rms(x, w("mlp_norm"), cfg.norm_eps)
        x = x + _silu(h @ w("w1")) @ w("w2")
    f = _rms(x, p["obs.final_norm"], cfg.norm_eps)
    return f[:, n_obs + 1 :] @ p["head.w"] + p["head.b"]


def finite_difference_check(loss_fn, params: list[Tensor], h: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn`` builds a scalar Tensor from the current parameter values.
    """
    backward(loss_fn(), params)
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        flat = p.data.reshape(-1)
        numeric = np.empty_like(flat)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            up = loss_fn().item()
            flat[j] = old - h
            down = loss_fn().item()
            flat[j] = old
            numeric[j] = (up - down) / (2 * h)
        a = analytic.reshape(-1)
        rel = np.abs(a - numeric) / np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-6)
        worst = max(worst, float(rel.max(initial=0.0)))
    return worst
