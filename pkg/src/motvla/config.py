"""Flat key=value run configuration shared by every subcommand."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Mapping

from .model.config import ModelConfig

ENV_PREFIX = "MOTVLA_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # model
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
    chunk_length: int = 16
    num_depth_queries_per_view: int = 4
    depth_token_dim: int = 8
    euler_steps: int = 10
    time_features: int = 16
    state_pathway: str = "observation"
    attention_variant: str = "block"
    norm_eps: float = 1e-6
    # training
    batch_size: int = 32
    steps: int = 2000
    lr: float = 1e-3
    min_lr: float = 1e-5
    warmup_steps: int = 100
    lr_schedule: str = "cosine"
    weight_decay: float = 0.0
    lambda_distill: float = 0.1
    seed: int = 0
    data_fraction: float = 1.0
    motion_eps: float = 1e-9
    log_every: int = 50
    init_seed: int = 0
    # data
    data_dir: str = "data"
    num_demos: int = 100
    # eval
    tasks: str = "reach"
    trials_per_task: int = 15
    eval_seed: int = 1000
    window: int = 50
    horizon: int = 10
    policy: str = "model"
    # bench
    bench_batch_size: int = 8
    bench_warmup: int = 2
    bench_iters: int = 5
    bench_replicas: int = 1
    bench_variant: str = "both"
    # output
    out_dir: str = "runs"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, str) and ("#" in v or "\n" in v or v != v.strip()):
                raise ConfigError(f"{f.name}: value {v!r} cannot be written as a key=value line")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ConfigError(f"lr_schedule must be 'cosine' or 'constant', got {self.lr_schedule!r}")
        if self.policy not in ("model", "expert", "zero", "random"):
            raise ConfigError(f"policy must be model, expert, zero or random, got {self.policy!r}")
        if self.bench_variant not in ("both", "dense", "block"):
            raise ConfigError(f"bench_variant must be both, dense or block, got {self.bench_variant!r}")
        if not 0 < self.data_fraction <= 1:
            raise ConfigError(f"data_fraction must be in (0, 1], got {self.data_fraction}")
        if self.lambda_distill < 0:
            raise ConfigError("lambda_distill must be nonnegative")
        for name in ("batch_size", "trials_per_task", "window", "horizon", "num_demos", "log_every",
                     "bench_batch_size", "bench_iters", "bench_replicas"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.steps < 0 or self.warmup_steps < 0 or self.bench_warmup < 0:
            raise ConfigError("steps, warmup_steps and bench_warmup must be nonnegative")
        if self.horizon > self.chunk_length:
            raise ConfigError(f"horizon {self.horizon} exceeds chunk_length {self.chunk_length}")
        try:
            self.model()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def model(self) -> ModelConfig:
        names = {f.name for f in fields(ModelConfig)}
        return ModelConfig(**{k: getattr(self, k) for k in names})

    def task_list(self) -> list[str]:
        return [t.strip() for t in self.tasks.split(",") if t.strip()]

    def with_overrides(self, values: Mapping[str, str]) -> "RunConfig":
        return replace(self, **_coerce_all(values))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(name: str, raw: str, kind: type):
    try:
        if kind is bool:
            return raw.strip().lower() in ("1", "true", "yes")
        return kind(raw)
    except ValueError:
        raise ConfigError(f"config key {name}: cannot parse {raw!r} as {kind.__name__}") from None


def _coerce_all(values: Mapping[str, str]) -> dict:
    kinds = {f.name: type(f.default) for f in fields(RunConfig)}
    unknown = sorted(set(values) - set(kinds))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return {k: v if isinstance(v, kinds[k]) else _coerce(k, str(v), kinds[k]) for k, v in values.items()}


def parse_config(text: str) -> RunConfig:
    values: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        values[key] = value
    return RunConfig(**_coerce_all(values))


def dump_config(config: RunConfig) -> str:
    # repr keeps floats exact; strings are written bare
    lines = [f"{k}={v if isinstance(v, str) else repr(v)}" for k, v in config.to_dict().items()]
    return "\n".join(lines) + "\n"


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    return {k[len(ENV_PREFIX):].lower(): v for k, v in environ.items() if k.startswith(ENV_PREFIX)}


def load_config(path=None, environ: Mapping[str, str] | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``MOTVLA_<KEY>`` environment variables."""
    cfg = parse_config(Path(path).read_text(encoding="utf-8")) if path else RunConfig()
    overrides = env_overrides(environ)
    return cfg.with_overrides(overrides) if overrides else cfg
