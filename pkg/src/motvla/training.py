"""Seeded optimisation of the flow-matching and depth-distillation objectives."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as te
from .config import RunConfig
from .data import (
    Episode,
    NormStats,
    collate,
    compute_norm_stats,
    make_training_sample,
    sample_index,
    subsample_episodes,
    trim_static_frames,
)
from .depth import distill_loss, project_queries, synthetic_depth_teacher, total_loss
from .flow import fm_loss, make_flow_sample
from .model import MoTParams, encode_observation, forward_mot, init_params, load_checkpoint, save_checkpoint
from .tensor import AdamW, NumericalError

LOG_COLUMNS = ("step", "fm_loss", "distill_loss", "total", "lr")


class TrainingAborted(NumericalError):
    def __init__(self, message: str, dump_path: Path | None = None):
        super().__init__(message)
        self.dump_path = dump_path


@dataclass
class StepLosses:
    fm: float
    distill: float
    total: float


def learning_rate(step: int, cfg: RunConfig) -> float:
    """Linear warmup to ``lr``, then constant or cosine decay to ``min_lr`` by ``steps``."""
    if cfg.warmup_steps and step < cfg.warmup_steps:
        return cfg.lr * (step + 1) / cfg.warmup_steps
    if cfg.lr_schedule == "constant":
        return cfg.lr
    span = max(cfg.steps - cfg.warmup_steps, 1)
    frac = min((step - cfg.warmup_steps) / span, 1.0)
    return cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1.0 + math.cos(math.pi * frac))


def loss_terms(params: MoTParams, batch, rng: np.random.Generator, lambda_distill: float):
    """(fm, distill, total) tensors for one batch; the distillation term is always computed for logging."""
    ctx = encode_observation(params, batch.images, batch.instruction, batch.state)
    sample = make_flow_sample(batch.actions, rng)
    out = forward_mot(params, ctx, te.Tensor(sample.interpolant), sample.s)
    fm = fm_loss(out.velocity, sample)
    distill = distill_loss(project_queries(out.depth_hidden, params),
                           synthetic_depth_teacher(batch.images, params.config))
    return fm, distill, total_loss(fm, distill, lambda_distill)


class BatchSchedule:
    """Batch ``k`` is a pure function of (seed, k): epoch e uses permutation seed (seed, e)."""

    def __init__(self, dataset: Sequence[Episode], batch_size: int, seed: int):
        self.index = sample_index(dataset)
        self.per_epoch = math.ceil(len(self.index) / batch_size)
        self.batch_size = batch_size
        self.seed = seed
        self._epoch, self._order = -1, None

    def __call__(self, step: int) -> list[tuple[int, int]]:
        epoch, i = divmod(step, self.per_epoch)
        if epoch != self._epoch:
            self._epoch = epoch
            self._order = np.random.default_rng([self.seed, epoch]).permutation(len(self.index))
        sel = self._order[i * self.batch_size : (i + 1) * self.batch_size]
        return [self.index[j] for j in sel]


@dataclass
class TrainResult:
    params: MoTParams
    stats: NormStats
    step: int
    log: list[dict] = field(default_factory=list)
    best_path: Path | None = None
    final_path: Path | None = None


def prepare_dataset(episodes: Sequence[Episode], cfg: RunConfig) -> list[Episode]:
    subset = subsample_episodes(list(episodes), cfg.data_fraction, cfg.seed)
    return [trim_static_frames(ep, cfg.motion_eps) for ep in subset]


def _optimizer_extra(opt: AdamW, names: list[str]) -> dict[str, np.ndarray]:
    extra = {}
    if opt.state.m:
        for n, m, v in zip(names, opt.state.m, opt.state.v):
            extra[f"opt.m.{n}"] = m
            extra[f"opt.v.{n}"] = v
    return extra


def _dump_diagnostic(out_dir: Path, step: int, params: MoTParams, losses: dict, reason: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "nan_dump.json"
    norms = {n: float(np.sqrt(np.nansum(t.data**2))) for n, t in params.tensors.items()}
    nonfinite = [n for n, t in params.tensors.items() if not np.all(np.isfinite(t.data))]
    path.write_text(json.dumps({"step": step, "reason": reason, "losses": losses,
                                "nonfinite_params": nonfinite, "param_norms": norms}, indent=2) + "\n")
    return path


def train(episodes: Sequence[Episode], cfg: RunConfig, out_dir=None, resume=None,
          max_steps: int | None = None) -> TrainResult:
    """Optimise ``fm + lambda * distill`` for ``cfg.steps`` total steps.

    With ``resume`` the parameters, optimiser moments, normalisation and step
    counter come from that checkpoint.  ``max_steps`` stops early (for tests
    of resumption) without changing the schedule.
    """
    out = Path(out_dir) if out_dir is not None else None
    dataset = prepare_dataset(episodes, cfg)
    model_cfg = cfg.model()
    if resume is not None:
        params, meta, extra = load_checkpoint(resume, expect=model_cfg)
        stats = NormStats.from_arrays(extra)
        start = int(meta["step"])
    else:
        params = init_params(model_cfg, cfg.init_seed)
        stats = compute_norm_stats(dataset)
        start, extra = 0, {}
    names = params.names()
    opt = AdamW(params.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay, names=names)
    if resume is not None and f"opt.m.{names[0]}" in extra:
        opt.state.m = [extra[f"opt.m.{n}"].copy() for n in names]
        opt.state.v = [extra[f"opt.v.{n}"].copy() for n in names]
        opt.state.step = start
    schedule = BatchSchedule(dataset, cfg.batch_size, cfg.seed)
    T = model_cfg.chunk_length
    end = cfg.steps if max_steps is None else min(cfg.steps, start + max_steps)

    log: list[dict] = []
    window: list[float] = []
    best = math.inf
    log_fh = writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "train_log.csv"
        log_fh = log_path.open("a" if resume is not None else "w", newline="", encoding="utf-8")
        writer = csv.writer(log_fh, lineterminator="\n")
        if resume is None:
            writer.writerow(LOG_COLUMNS)

    def save(path: Path, step: int) -> None:
        meta = {"step": str(step), "seed": str(cfg.seed), "lambda_distill": repr(cfg.lambda_distill)}
        save_checkpoint(path, params, meta, {**stats.as_arrays(), **_optimizer_extra(opt, names)})

    result = TrainResult(params, stats, start, log)
    try:
        for step in range(start, end):
            batch = collate([make_training_sample(dataset[e], t, T, stats) for e, t in schedule(step)])
            rng = np.random.default_rng([cfg.seed, step])
            lr = learning_rate(step, cfg)
            fm, distill, loss = loss_terms(params, batch, rng, cfg.lambda_distill)
            losses = {"fm_loss": fm.item(), "distill_loss": distill.item(), "total": loss.item()}
            if not all(math.isfinite(v) for v in losses.values()):
                raise NumericalError(f"non-finite loss at step {step}: {losses}")
            te.backward(loss, params.parameters())
            opt.step(lr=lr)
            window.append(losses["total"])
            if (step + 1) % cfg.log_every == 0 or step + 1 == end:
                row = {"step": step + 1, **losses, "lr": lr}
                log.append(row)
                if writer is not None:
                    writer.writerow([row[c] if c == "step" else repr(row[c]) for c in LOG_COLUMNS])
                mean = float(np.mean(window))
                window.clear()
                if out is not None and mean < best:
                    best = mean
                    result.best_path = out / "best.motc"
                    save(result.best_path, step + 1)
            result.step = step + 1
    except NumericalError as exc:
        dump = _dump_diagnostic(out or Path("."), result.step, params, locals().get("losses", {}), str(exc))
        raise TrainingAborted(f"training aborted: {exc}; diagnostic written to {dump}", dump) from exc
    finally:
        if log_fh is not None:
            log_fh.close()
    if out is not None:
        result.final_path = out / "final.motc"
        save(result.final_path, result.step)
    return result
