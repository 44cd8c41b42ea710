"""Policies that map toy-environment observations to actions."""

from __future__ import annotations

from collections import deque

import numpy as np

from .data.pipeline import NormStats, denormalize, normalize
from .env import ACTION_DIM, Observation, TaskSpec, scripted_expert
from .flow import sample_actions
from .model import MoTParams, encode_observation, forward_mot
from .tensor import Tensor, no_grad


class ExpertPolicy:
    """The scripted controller, reading privileged state."""

    def reset(self, task: TaskSpec, seed: int) -> None:
        self.task = task

    def act(self, obs: Observation) -> np.ndarray:
        return scripted_expert(obs.env_state, self.task)


class ZeroPolicy:
    def reset(self, task: TaskSpec, seed: int) -> None:
        pass

    def act(self, obs: Observation) -> np.ndarray:
        return np.zeros(ACTION_DIM)


class RandomPolicy:
    def __init__(self, seed: int = 0):
        self.seed = seed

    def reset(self, task: TaskSpec, seed: int) -> None:
        self.rng = np.random.default_rng([self.seed, seed])

    def act(self, obs: Observation) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, ACTION_DIM) * np.array([0.05, 0.05, 1.0] * 2)


class StallPolicy:
    """Scripted expert until ``stop_after`` checkpoints are done, then zero actions."""

    def __init__(self, stop_after: int):
        self.stop_after = stop_after

    def reset(self, task: TaskSpec, seed: int) -> None:
        self.task = task

    def act(self, obs: Observation) -> np.ndarray:
        if obs.env_state.checkpoints_done >= self.stop_after:
            return np.zeros(ACTION_DIM)
        return scripted_expert(obs.env_state, self.task)


class FlowPolicy:
    """Receding-horizon sampler: draw a chunk, execute its first ``horizon`` actions, re-plan.

    Noise is drawn from a stream keyed by (policy seed, trial seed), so a
    trial is reproducible regardless of which trials ran before it.
    """

    def __init__(self, params: MoTParams, stats: NormStats, horizon: int = 10,
                 euler_steps: int | None = None, seed: int = 0):
        cfg = params.config
        if not 1 <= horizon <= cfg.chunk_length:
            raise ValueError(f"horizon must be in [1, {cfg.chunk_length}], got {horizon}")
        self.params = params
        self.stats = stats
        self.horizon = horizon
        self.euler_steps = euler_steps or cfg.euler_steps
        self.seed = seed
        self._queue: deque[np.ndarray] = deque()

    def reset(self, task: TaskSpec, seed: int) -> None:
        self.rng = np.random.default_rng([self.seed, seed])
        self._queue.clear()

    def plan(self, obs: Observation) -> np.ndarray:
        cfg = self.params.config
        state = normalize(obs.state, self.stats.state_mean, self.stats.state_std)
        with no_grad():
            ctx = encode_observation(self.params, obs.images[None].astype(np.float64) / 255.0,
                                     np.asarray(obs.instruction)[None], state[None])

            def velocity(a, c, s):
                return forward_mot(self.params, c, Tensor(a), s).velocity.data

            chunk = sample_actions(velocity, ctx, self.euler_steps, self.rng,
                                   (1, cfg.chunk_length, cfg.action_dim))
        return denormalize(chunk[0], self.stats.action_mean, self.stats.action_std)

    def act(self, obs: Observation) -> np.ndarray:
        if not self._queue:
            self._queue.extend(self.plan(obs)[: self.horizon])
        return self._queue.popleft()
