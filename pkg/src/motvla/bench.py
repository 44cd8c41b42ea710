"""Training-step throughput for dense-masked versus block-structured attention."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as te
from .attention import attention_macs
from .data.pipeline import Batch
from .depth import distill_loss, project_queries, synthetic_depth_teacher, total_loss
from .flow import fm_loss, make_flow_sample
from .masking import BlockMaskSpec
from .model import ModelConfig, encode_observation, forward_mot, init_params
from .tensor import AdamW, NumericalError

VARIANTS = ("dense", "block")


def synthetic_batch(config: ModelConfig, batch_size: int, seed: int = 0) -> Batch:
    rng = np.random.default_rng(seed)
    s = config.image_size
    n_text = min(4, config.max_text_len)
    return Batch(
        rng.uniform(0.0, 1.0, (batch_size, 3, s, s)),
        rng.integers(0, config.vocab_size, (batch_size, n_text)),
        rng.standard_normal((batch_size, config.state_dim)),
        rng.standard_normal((batch_size, config.chunk_length, config.action_dim)),
    )


@dataclass
class VariantRun:
    variant: str
    samples_per_second: float
    elapsed_seconds: float
    final_loss: float


def _loss(params, batch: Batch, sample, lambda_distill: float, variant: str):
    ctx = encode_observation(params, batch.images, batch.instruction, batch.state)
    out = forward_mot(params, ctx, te.Tensor(sample.interpolant), sample.s, variant=variant)
    fm = fm_loss(out.velocity, sample)
    distill = distill_loss(project_queries(out.depth_hidden, params),
                           synthetic_depth_teacher(batch.images, params.config))
    return total_loss(fm, distill, lambda_distill), out.velocity


def run_variant(config: ModelConfig, batch_size: int, warmup_iters: int, measured_iters: int,
                variant: str, seed: int = 0, lambda_distill: float = 0.1) -> VariantRun:
    """Time ``measured_iters`` full optimiser steps after ``warmup_iters`` untimed ones."""
    if measured_iters < 1 or warmup_iters < 0:
        raise ValueError("need measured_iters >= 1 and warmup_iters >= 0")
    params = init_params(config, seed)
    opt = AdamW(params.parameters(), lr=1e-3, names=params.names())
    batch = synthetic_batch(config, batch_size, seed)
    # flow samples drawn up front so the timed loop does only model work
    rng = np.random.default_rng(seed + 1)
    samples = [make_flow_sample(batch.actions, rng) for _ in range(warmup_iters + measured_iters)]
    loss_value = math.nan
    start = 0.0
    for i, sample in enumerate(samples):
        if i == warmup_iters:
            start = time.perf_counter()
        loss, _ = _loss(params, batch, sample, lambda_distill, variant)
        loss_value = loss.item()
        if not math.isfinite(loss_value):
            raise NumericalError(f"bench: non-finite loss at iteration {i} ({variant})")
        te.backward(loss, params.parameters())
        opt.step()
    elapsed = time.perf_counter() - start
    return VariantRun(variant, batch_size * measured_iters / elapsed, elapsed, loss_value)


def variant_deviation(config: ModelConfig, batch_size: int = 2, seed: int = 0) -> tuple[float, float]:
    """Max abs difference between variants: (forward velocity, parameter gradients)."""
    batch = synthetic_batch(config, batch_size, seed)
    sample = make_flow_sample(batch.actions, np.random.default_rng(seed + 1))
    outs, grads = {}, {}
    for variant in VARIANTS:
        params = init_params(config, seed)
        loss, vel = _loss(params, batch, sample, 0.1, variant)
        te.backward(loss, params.parameters())
        outs[variant] = vel.data
        grads[variant] = [p.grad for p in params.parameters()]
    fwd = float(np.max(np.abs(outs["dense"] - outs["block"])))
    grad = max(float(np.max(np.abs(a - b))) for a, b in zip(grads["dense"], grads["block"]))
    return fwd, grad


def sequence_spec(config: ModelConfig, n_text: int) -> BlockMaskSpec:
    obs = config.num_image_tokens + n_text + config.num_depth_queries
    return BlockMaskSpec(obs, 1, config.chunk_length)


@dataclass
class BenchReport:
    config: dict
    batch_size: int
    warmup_iters: int
    measured_iters: int
    samples_per_second: dict[str, float]
    final_loss: dict[str, float]
    max_abs_deviation: float
    grad_max_abs_deviation: float
    final_loss_deviation: float | None
    speedup: float | None
    attention_macs: dict[str, int]
    replicas: list[float] = field(default_factory=list)
    aggregate_samples_per_second: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        rows = [("variant", "samples/s", "final loss", "attn MACs/head/layer")]
        for v in self.samples_per_second:
            rows.append((v, f"{self.samples_per_second[v]:.2f}", f"{self.final_loss[v]:.10g}",
                         str(self.attention_macs[v])))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        lines.append(f"max abs deviation: forward {self.max_abs_deviation:.3e}, "
                     f"gradients {self.grad_max_abs_deviation:.3e}")
        if self.speedup is not None:
            lines.append(f"speedup (block / dense): {self.speedup:.3f}")
        for i, r in enumerate(self.replicas):
            lines.append(f"replica {i}: {r:.2f} samples/s")
        if self.aggregate_samples_per_second is not None:
            lines.append(f"aggregate: {self.aggregate_samples_per_second:.2f} samples/s")
        return "\n".join(lines) + "\n"


def _replica(args) -> float:
    return run_variant(*args).samples_per_second


def bench_forward_backward(config: ModelConfig, batch_size: int, warmup_iters: int, measured_iters: int,
                           variants=VARIANTS, replicas: int = 1, seed: int = 0) -> BenchReport:
    """Benchmark full training steps per attention variant on identical seeded inputs.

    With ``replicas > 1`` the first variant is additionally run in that many
    worker processes at once and their rates are summed.
    """
    variants = tuple(variants)
    runs = {v: run_variant(config, batch_size, warmup_iters, measured_iters, v, seed) for v in variants}
    fwd, grad = variant_deviation(config, seed=seed)
    both = all(v in runs for v in VARIANTS)
    spec = sequence_spec(config, min(4, config.max_text_len))
    report = BenchReport(
        config=config.to_dict(),
        batch_size=batch_size,
        warmup_iters=warmup_iters,
        measured_iters=measured_iters,
        samples_per_second={v: r.samples_per_second for v, r in runs.items()},
        final_loss={v: r.final_loss for v, r in runs.items()},
        max_abs_deviation=fwd,
        grad_max_abs_deviation=grad,
        final_loss_deviation=abs(runs["dense"].final_loss - runs["block"].final_loss) if both else None,
        speedup=runs["block"].samples_per_second / runs["dense"].samples_per_second if both else None,
        attention_macs={v: attention_macs(spec, config.head_dim, v) for v in VARIANTS},
    )
    if replicas > 1:
        job = (config, batch_size, warmup_iters, measured_iters, variants[0], seed)
        with ProcessPoolExecutor(max_workers=replicas) as pool:
            report.replicas = list(pool.map(_replica, [job] * replicas))
        report.aggregate_samples_per_second = float(sum(report.replicas))
    return report


def write_bench(report: BenchReport, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "bench.json", "table": out / "bench.txt"}
    paths["json"].write_text(report.to_json(), encoding="utf-8")
    paths["table"].write_text(report.to_table(), encoding="utf-8")
    return paths

