"""Two-pathway transformer coupled through one shared attention.

Observation tokens (image patches, instruction words, depth queries) and,
by default, the proprioceptive state token are processed with the
observation pathway's projections and MLPs; noisy action tokens use the
action expert's.  In every layer the per-pathway queries, keys and values are
concatenated and attended jointly under the three-block mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import tensor as te
from ..attention import attention
from ..masking import OBSERVATION, BlockMaskSpec
from ..tensor import Tensor
from .config import NUM_VIEWS, ModelConfig

PATHWAYS = ("obs", "act")


@dataclass
class MoTParams:
    config: ModelConfig
    tensors: dict[str, Tensor]

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def names(self) -> list[str]:
        return list(self.tensors)

    def count(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))

    def copy(self) -> "MoTParams":
        return MoTParams(self.config, {k: Tensor(v.data.copy(), requires_grad=True, name=k)
                                       for k, v in self.tensors.items()})

    def pathway(self, which: str) -> dict[str, Tensor]:
        prefix = which + "."
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}


def _shapes(cfg: ModelConfig) -> dict[str, tuple[tuple[int, ...], str]]:
    d, h = cfg.model_dim, cfg.mlp_hidden_dim
    p2 = cfg.patch_size**2
    nq = cfg.num_depth_queries_per_view
    shapes: dict[str, tuple[tuple[int, ...], str]] = {
        "patch_embed.w": ((p2, d), "fan_in"),
        "patch_embed.b": ((d,), "zero"),
        "view_embed": ((NUM_VIEWS, d), "pos"),
        "patch_pos": ((cfg.patches_per_view, d), "pos"),
        "text_embed": ((cfg.vocab_size, d), "table"),
        "text_pos": ((cfg.max_text_len, d), "pos"),
        "depth_queries": ((cfg.num_depth_queries, d), "table"),
        "state_proj.w": ((cfg.state_dim, d), "fan_in"),
        "state_proj.b": ((d,), "zero"),
        "action_in.w": ((cfg.action_dim, d), "fan_in"),
        "action_in.b": ((d,), "zero"),
        "action_pos": ((cfg.chunk_length, d), "pos"),
        "time_proj.w": ((cfg.time_features, d), "fan_in"),
        "time_proj.b": ((d,), "zero"),
    }
    for path in PATHWAYS:
        for i in range(cfg.num_layers):
            pre = f"{path}.{i}."
            shapes[pre + "attn_norm"] = ((d,), "one")
            for w in ("wq", "wk", "wv", "wo"):
                shapes[pre + w] = ((d, d), "fan_in")
            shapes[pre + "mlp_norm"] = ((d,), "one")
            shapes[pre + "w1"] = ((d, h), "fan_in")
            shapes[pre + "w2"] = ((h, d), "fan_in")
        shapes[f"{path}.final_norm"] = ((d,), "one")
    shapes["head.w"] = ((d, cfg.action_dim), "fan_in")
    shapes["head.b"] = ((cfg.action_dim,), "zero")
    shapes["depth_proj.seeds"] = ((nq, d), "table")
    for w in ("wq", "wk", "wv"):
        shapes[f"depth_proj.{w}"] = ((d, d), "fan_in")
    shapes["depth_proj.out"] = ((d, cfg.depth_token_dim), "fan_in")
    return shapes


def init_params(config: ModelConfig, seed: int = 0) -> MoTParams:
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, (shape, kind) in _shapes(config).items():
        if kind == "zero":
            data = np.zeros(shape)
        elif kind == "one":
            data = np.ones(shape)
        elif kind == "pos":
            data = rng.normal(0.0, 0.2, shape)
        elif kind == "table":
            data = rng.normal(0.0, 1.0, shape)
        else:
            data = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return MoTParams(config, tensors)


def tie_pathways(params: MoTParams) -> MoTParams:
    """Copy of ``params`` where the action expert reuses the observation weights."""
    tied = params.copy()
    for name, t in list(tied.tensors.items()):
        if name.startswith("act."):
            tied.tensors[name] = tied.tensors["obs." + name[4:]]
    return tied


@dataclass
class ObservationContext:
    """Model-ready observation tokens, each [B, n, D]."""

    image_tokens: Tensor
    text_tokens: Tensor
    depth_query_tokens: Tensor
    state_token: Tensor

    @property
    def batch_size(self) -> int:
        return self.image_tokens.shape[0]

    @property
    def obs_len(self) -> int:
        return self.image_tokens.shape[1] + self.text_tokens.shape[1] + self.depth_query_tokens.shape[1]

    @property
    def depth_slice(self) -> tuple[int, int]:
        start = self.image_tokens.shape[1] + self.text_tokens.shape[1]
        return start, start + self.depth_query_tokens.shape[1]

    def obs_block(self) -> Tensor:
        return te.concat([self.image_tokens, self.text_tokens, self.depth_query_tokens], axis=1)

    def mask_spec(self, action_len: int) -> BlockMaskSpec:
        return BlockMaskSpec(self.obs_len, self.state_token.shape[1], action_len)


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """[B, V, S, S] -> [B, V * (S/patch)^2, patch^2], patches in row-major order."""
    b, v, s, _ = images.shape
    n = s // patch
    x = images.reshape(b, v, n, patch, n, patch).transpose(0, 1, 2, 4, 3, 5)
    return x.reshape(b, v * n * n, patch * patch)


def encode_observation(params: MoTParams, images, instruction_ids, state) -> ObservationContext:
    """Embed a batch of observations.

    ``images`` is [B, 3, S, S] with intensities in [0, 1]; ``instruction_ids``
    is an integer array [B, n_text] (``n_text`` may be 0); ``state`` is
    [B, state_dim].
    """
    cfg = params.config
    images = np.asarray(images, dtype=np.float64)
    ids = np.asarray(instruction_ids, dtype=np.int64)
    state = np.asarray(state, dtype=np.float64)
    if images.ndim != 4 or images.shape[1:] != (NUM_VIEWS, cfg.image_size, cfg.image_size):
        raise ValueError(
            f"images must be [B, {NUM_VIEWS}, {cfg.image_size}, {cfg.image_size}], got {images.shape}"
        )
    b = images.shape[0]
    if ids.ndim != 2 or ids.shape[0] != b:
        raise ValueError(f"instruction_ids must be [B, n] with B={b}, got {ids.shape}")
    if ids.shape[1] > cfg.max_text_len:
        raise ValueError(f"instruction has {ids.shape[1]} tokens, max_text_len is {cfg.max_text_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise ValueError(f"instruction token id outside vocabulary of size {cfg.vocab_size}")
    if state.shape != (b, cfg.state_dim):
        raise ValueError(f"state must be [B, {cfg.state_dim}], got {state.shape}")

    p = cfg.patches_per_view
    patches = Tensor(patchify(images, cfg.patch_size))
    img = te.add(te.matmul(patches, params["patch_embed.w"]), params["patch_embed.b"])
    view_ids = np.repeat(np.arange(NUM_VIEWS), p)
    patch_ids = np.tile(np.arange(p), NUM_VIEWS)
    img = te.add(img, te.add(te.embedding(params["view_embed"], view_ids),
                             te.embedding(params["patch_pos"], patch_ids)))

    n_text = ids.shape[1]
    text = te.embedding(params["text_embed"], ids)
    text = te.add(text, te.slice_axis(params["text_pos"], 0, 0, n_text))

    depth = te.broadcast(params["depth_queries"], (b,) + params["depth_queries"].shape)

    st = te.reshape(Tensor(state), (b, 1, cfg.state_dim))
    st = te.add(te.matmul(st, params["state_proj.w"]), params["state_proj.b"])
    return ObservationContext(img, text, depth, st)


def time_features(s, num_features: int, base_frequency: float = 1.0, max_frequency: float = 100.0) -> np.ndarray:
    """Interleaved [sin(f_0 s), cos(f_0 s), sin(f_1 s), ...] with geometric f_i."""
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0.0) or np.any(s > 1.0):
        raise ValueError(f"flow time must lie in [0, 1], got {s}")
    half = num_features // 2
    if half == 1:
        freqs = np.array([base_frequency])
    else:
        freqs = base_frequency * (max_frequency / base_frequency) ** (np.arange(half) / (half - 1))
    angles = s[..., None] * freqs
    out = np.empty(s.shape + (num_features,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def flow_time_embedding(params: MoTParams, s) -> Tensor:
    """[B] flow times -> [B, 1, D] additive action-token embedding."""
    cfg = params.config
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    feats = Tensor(time_features(s, cfg.time_features)[:, None, :])
    return te.add(te.matmul(feats, params["time_proj.w"]), params["time_proj.b"])


def embed_actions(params: MoTParams, noisy_actions, s) -> Tensor:
    cfg = params.config
    a = noisy_actions if isinstance(noisy_actions, Tensor) else Tensor(noisy_actions)
    if a.ndim != 3 or a.shape[1:] != (cfg.chunk_length, cfg.action_dim):
        raise ValueError(f"noisy actions must be [B, {cfg.chunk_length}, {cfg.action_dim}], got {a.shape}")
    x = te.add(te.matmul(a, params["action_in.w"]), params["action_in.b"])
    x = te.add(x, params["action_pos"])
    return te.add(x, flow_time_embedding(params, s))


@dataclass
class MoTOutput:
    velocity: Tensor
    depth_hidden: Tensor
    obs_hidden: list[Tensor] = field(default_factory=list)


def _layer_inputs(w: dict[str, Tensor], x: Tensor, i: int, eps: float):
    h = te.rms_norm(x, w[f"{i}.attn_norm"], eps)
    return te.matmul(h, w[f"{i}.wq"]), te.matmul(h, w[f"{i}.wk"]), te.matmul(h, w[f"{i}.wv"])


def _mlp(w: dict[str, Tensor], x: Tensor, i: int, eps: float) -> Tensor:
    h = te.rms_norm(x, w[f"{i}.mlp_norm"], eps)
    return te.add(x, te.matmul(te.silu(te.matmul(h, w[f"{i}.w1"])), w[f"{i}.w2"]))


def forward_mot(params: MoTParams, ctx: ObservationContext, noisy_actions, s, *,
                variant: str | None = None, keep_hidden: bool = False) -> MoTOutput:
    """Velocity prediction for noisy action chunks at flow times ``s``.

    ``keep_hidden`` records the observation-block hidden states entering each
    layer and after the last one.
    """
    cfg = params.config
    variant = variant or cfg.attention_variant
    if noisy_actions.shape[0] != ctx.batch_size:
        raise ValueError(f"batch of {noisy_actions.shape[0]} action chunks for {ctx.batch_size} observations")
    acts = embed_actions(params, noisy_actions, s)
    spec = ctx.mask_spec(cfg.chunk_length)
    if cfg.state_pathway == OBSERVATION:
        x_o = te.concat([ctx.obs_block(), ctx.state_token], axis=1)
        x_a = acts
    else:
        x_o = ctx.obs_block()
        x_a = te.concat([ctx.state_token, acts], axis=1)
    n_o = x_o.shape[1]
    w_o, w_a = params.pathway("obs"), params.pathway("act")
    eps = cfg.norm_eps

    hidden = []
    for i in range(cfg.num_layers):
        if keep_hidden:
            hidden.append(te.slice_axis(x_o, 1, 0, ctx.obs_len))
        qo, ko, vo = _layer_inputs(w_o, x_o, i, eps)
        qa, ka, va = _layer_inputs(w_a, x_a, i, eps)
        att = attention(te.concat([qo, qa], 1), te.concat([ko, ka], 1), te.concat([vo, va], 1),
                        spec, cfg.num_heads, variant)
        x_o = te.add(x_o, te.matmul(te.slice_axis(att, 1, 0, n_o), w_o[f"{i}.wo"]))
        x_a = te.add(x_a, te.matmul(te.slice_axis(att, 1, n_o, spec.total), w_a[f"{i}.wo"]))
        x_o = _mlp(w_o, x_o, i, eps)
        x_a = _mlp(w_a, x_a, i, eps)
    if keep_hidden:
        hidden.append(te.slice_axis(x_o, 1, 0, ctx.obs_len))

    f_o = te.rms_norm(x_o, w_o["final_norm"], eps)
    f_a = te.rms_norm(x_a, w_a["final_norm"], eps)
    if cfg.state_pathway != OBSERVATION:
        f_a = te.slice_axis(f_a, 1, 1, f_a.shape[1])
    velocity = te.add(te.matmul(f_a, params["head.w"]), params["head.b"])
    d0, d1 = ctx.depth_slice
    return MoTOutput(velocity, te.slice_axis(f_o, 1, d0, d1), hidden)
