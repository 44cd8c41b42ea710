"""Linear noise-to-data probability path, velocity regression loss, Euler sampler."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as te
from .tensor import NumericalError, Tensor


@dataclass(frozen=True)
class FlowSample:
    clean: np.ndarray
    noise: np.ndarray
    s: np.ndarray
    interpolant: np.ndarray
    target: np.ndarray


def _expand(s: np.ndarray, like: np.ndarray) -> np.ndarray:
    return s.reshape(s.shape + (1,) * (like.ndim - s.ndim))


def make_flow_sample(actions, rng: np.random.Generator, s=None, noise=None) -> FlowSample:
    """Draw noise and flow time, and build ``s * A + (1 - s) * noise``.

    For a batch ``actions`` of shape [B, T, A] one flow time is drawn per
    chunk; an unbatched [T, A] chunk gets a scalar time.  ``s`` and ``noise``
    may be forced.
    """
    clean = np.asarray(actions, dtype=np.float64)
    if not np.all(np.isfinite(clean)):
        raise NumericalError("make_flow_sample: non-finite clean actions")
    batch_shape = clean.shape[:-2]
    if noise is None:
        noise = rng.standard_normal(clean.shape)
    if s is None:
        s = rng.uniform(0.0, 1.0, size=batch_shape)
    s = np.broadcast_to(np.asarray(s, dtype=np.float64), batch_shape).copy()
    noise = np.asarray(noise, dtype=np.float64)
    se = _expand(s, clean)
    interpolant = se * clean + (1.0 - se) * noise
    return FlowSample(clean, noise, s, interpolant, clean - noise)


def fm_loss(velocity_pred: Tensor, sample: FlowSample) -> Tensor:
    """Mean squared error against the straight-path velocity ``A - noise``."""
    return te.mse_loss(velocity_pred, Tensor(sample.target))


def sample_actions(model_fn: Callable[[np.ndarray, object, np.ndarray], np.ndarray], ctx, steps: int,
                   rng: np.random.Generator, shape: tuple[int, ...], noise=None) -> np.ndarray:
    """Integrate the velocity field from noise at s=0 to s=1 with ``steps`` Euler steps.

    ``model_fn(A, ctx, s)`` returns the velocity at the left end ``s = i / steps``
    of each step; ``s`` is an array over the leading (batch) axes of ``A``.
    """
    if steps < 1:
        raise ValueError(f"sample_actions needs at least one Euler step, got {steps}")
    a = rng.standard_normal(shape) if noise is None else np.array(noise, dtype=np.float64)
    batch_shape = a.shape[:-2]
    dt = 1.0 / steps
    for i in range(steps):
        s = np.full(batch_shape, i / steps)
        v = np.asarray(model_fn(a, ctx, s), dtype=np.float64)
        if v.shape != a.shape:
            raise ValueError(f"velocity shape {v.shape} does not match actions {a.shape}")
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"sample_actions: non-finite velocity at Euler step {i} (s={i / steps:.4f})")
        a = a + dt * v
    return a
