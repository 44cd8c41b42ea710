from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..masking import ACTION, OBSERVATION

NUM_VIEWS = 3


@dataclass(frozen=True)
class ModelConfig:
    model_dim: int = 64
    num_layers: int = 2
    num_heads: int = 2
    mlp_hidden_dim: int = 128
    image_size: int = 32
    patch_size: int = 8
    vocab_size: int = 32
    max_text_len: int = 12
    state_dim: int = 6
    action_dim: int = 6
    chunk_length: int = 50
    num_depth_queries_per_view: int = 4
    depth_token_dim: int = 8
    euler_steps: int = 10
    time_features: int = 16
    state_pathway: str = OBSERVATION
    attention_variant: str = "block"
    norm_eps: float = 1e-6

    def __post_init__(self):
        if self.model_dim % self.num_heads:
            raise ValueError(f"model_dim {self.model_dim} not divisible by num_heads {self.num_heads}")
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.chunk_length < 1 or self.euler_steps < 1:
            raise ValueError("chunk_length and euler_steps must be at least 1")
        if self.time_features < 2 or self.time_features % 2:
            raise ValueError("time_features must be a positive even number")
        if self.num_layers < 0 or self.num_depth_queries_per_view < 0:
            raise ValueError("num_layers and num_depth_queries_per_view must be nonnegative")
        if self.state_pathway not in (OBSERVATION, ACTION):
            raise ValueError(f"state_pathway must be {OBSERVATION!r} or {ACTION!r}")
        if self.attention_variant not in ("dense", "block"):
            raise ValueError("attention_variant must be 'dense' or 'block'")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads

    @property
    def patches_per_view(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def num_image_tokens(self) -> int:
        return NUM_VIEWS * self.patches_per_view

    @property
    def num_depth_queries(self) -> int:
        return NUM_VIEWS * self.num_depth_queries_per_view

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        unknown = set(values) - {f.name for f in fields(cls)}
        if unknown:
            raise KeyError(f"unknown model config keys: {sorted(unknown)}")
        kwargs = {}
        for f in fields(cls):
            if f.name in values:
                kwargs[f.name] = type(f.default)(values[f.name])
        return cls(**kwargs)

