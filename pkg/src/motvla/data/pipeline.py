"""Trimming, normalisation, chunk extraction and batching."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .episodes import Episode

STD_FLOOR = 1e-6


class StaticEpisodeError(ValueError):
    pass


def _moving(states: np.ndarray, motion_eps: float) -> np.ndarray:
    """moving[i] is True when frames i and i+1 differ by at least ``motion_eps`` (max-norm)."""
    if len(states) < 2:
        return np.zeros(0, dtype=bool)
    return np.abs(np.diff(states, axis=0)).max(axis=1) >= motion_eps


def trim_static_frames(ep: Episode, motion_eps: float) -> Episode:
    """Drop the leading frames that do not move into their successor and
    the trailing frames that did not move from their predecessor."""
    if motion_eps < 0:
        raise ValueError("motion_eps must be nonnegative")
    if motion_eps == 0:
        return ep
    moving = _moving(ep.states, motion_eps)
    idx = np.flatnonzero(moving)
    if len(idx) == 0:
        raise StaticEpisodeError(f"episode {ep.name or ep.seed} (task {ep.task_id}) never moves")
    return ep.slice(int(idx[0]), int(idx[-1]) + 2)


@dataclass(frozen=True)
class NormStats:
    state_mean: np.ndarray
    state_std: np.ndarray
    action_mean: np.ndarray
    action_std: np.ndarray

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {f"norm.{k}": getattr(self, k) for k in ("state_mean", "state_std", "action_mean", "action_std")}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "NormStats":
        return cls(*(np.asarray(arrays[f"norm.{k}"]) for k in ("state_mean", "state_std", "action_mean", "action_std")))


def _mean_std(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return x.mean(axis=0), np.maximum(x.std(axis=0), STD_FLOOR)


def compute_norm_stats(dataset: Sequence[Episode]) -> NormStats:
    if not dataset:
        raise ValueError("compute_norm_stats: empty dataset")
    sm, ss = _mean_std(np.concatenate([ep.states for ep in dataset]))
    am, as_ = _mean_std(np.concatenate([ep.actions for ep in dataset]))
    return NormStats(sm, ss, am, as_)


def normalize(x, mean, std) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - mean) / std


def denormalize(x, mean, std) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * std + mean


@dataclass
class TrainingSample:
    images: np.ndarray       # [3, S, S] in [0, 1]
    instruction: np.ndarray  # [n] int64
    state: np.ndarray        # normalised
    actions: np.ndarray      # [T, action_dim] normalised


def action_chunk(ep: Episode, t: int, T: int) -> np.ndarray:
    """Raw actions t..t+T-1, holding the last action past the end of the episode."""
    idx = np.minimum(np.arange(t, t + T), len(ep) - 1)
    return ep.actions[idx]


def make_training_sample(ep: Episode, t: int, T: int, stats: NormStats) -> TrainingSample:
    if not 0 <= t < len(ep):
        raise IndexError(f"timestep {t} outside episode of length {len(ep)}")
    return TrainingSample(
        images=ep.images[t].astype(np.float64) / 255.0,
        instruction=ep.instruction,
        state=normalize(ep.states[t], stats.state_mean, stats.state_std),
        actions=normalize(action_chunk(ep, t, T), stats.action_mean, stats.action_std),
    )


@dataclass
class Batch:
    images: np.ndarray        # [B, 3, S, S]
    instruction: np.ndarray   # [B, n] padded with 0
    state: np.ndarray         # [B, state_dim]
    actions: np.ndarray       # [B, T, action_dim]

    def __len__(self) -> int:
        return len(self.images)


def collate(samples: Sequence[TrainingSample], pad_id: int = 0) -> Batch:
    n = max(len(s.instruction) for s in samples)
    ids = np.full((len(samples), n), pad_id, dtype=np.int64)
    for i, s in enumerate(samples):
        ids[i, : len(s.instruction)] = s.instruction
    return Batch(
        np.stack([s.images for s in samples]),
        ids,
        np.stack([s.state for s in samples]),
        np.stack([s.actions for s in samples]),
    )


def sample_index(dataset: Sequence[Episode]) -> list[tuple[int, int]]:
    return [(e, t) for e, ep in enumerate(dataset) for t in range(len(ep))]


def shuffled_batches(dataset: Sequence[Episode], batch_size: int, seed: int) -> Iterator[list[tuple[int, int]]]:
    """One pass over every (episode, timestep) pair in a seeded order; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    index = sample_index(dataset)
    order = np.random.default_rng(seed).permutation(len(index))
    for i in range(0, len(order), batch_size):
        yield [index[j] for j in order[i : i + batch_size]]


def subsample_episodes(dataset: Sequence[Episode], fraction: float, seed: int) -> list[Episode]:
    """A seeded subset of ceil(fraction * n) episodes, kept in original order."""
    if not 0 < fraction <= 1:
        raise ValueError(f"data fraction must be in (0, 1], got {fraction}")
    if fraction == 1:
        return list(dataset)
    k = max(1, math.ceil(fraction * len(dataset)))
    keep = np.sort(np.random.default_rng(seed).choice(len(dataset), size=k, replace=False))
    return [dataset[i] for i in keep]
