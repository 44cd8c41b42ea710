from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data.episodes import Episode, save_episode
from .core import EnvState, TaskSpec, physics_step, sample_layout
from .expert import scripted_expert
from .render import render_views
from .tasks import tokenize


@dataclass
class Observation:
    images: np.ndarray        # [3, S, S] uint8
    state: np.ndarray         # proprioception
    instruction: np.ndarray   # token ids
    env_state: EnvState       # privileged; only scripted controllers read it


class ToyEnv:
    """Stateless facade: all state is carried in :class:`EnvState` values."""

    def __init__(self, task: TaskSpec, image_size: int = 32):
        self.task = task
        self.image_size = image_size
        self.instruction = tokenize(task.instruction)

    def reset(self, seed: int) -> tuple[EnvState, Observation]:
        state = sample_layout(self.task, seed)
        return state, self.observe(state)

    def step(self, state: EnvState, action) -> tuple[EnvState, int]:
        return physics_step(self.task, state, action)

    def observe(self, state: EnvState) -> Observation:
        return Observation(render_views(state, self.image_size, self.task), state.proprio(),
                           self.instruction, state)

    def done(self, state: EnvState) -> bool:
        return state.checkpoints_done == self.task.num_checkpoints


class ExpertFailure(RuntimeError):
    pass


def rollout_expert(env: ToyEnv, seed: int) -> tuple[Episode, bool]:
    state, obs = env.reset(seed)
    images, states, actions = [], [], []
    while not env.done(state) and state.steps < env.task.max_steps:
        action = scripted_expert(state, env.task)
        images.append(obs.images)
        states.append(obs.state)
        actions.append(action)
        state, _ = env.step(state, action)
        obs = env.observe(state)
    ep = Episode(np.stack(images), env.instruction.copy(), np.stack(states), np.stack(actions),
                 env.task.name, env.task.num_checkpoints, int(seed))
    return ep, env.done(state)


def episode_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31 - 1, size=n)]


def collect_demonstrations(task: TaskSpec, n: int, seed: int, image_size: int = 32,
                           out_dir=None, min_success_rate: float = 0.9) -> list[Episode]:
    """Expert rollouts from ``n`` seeded resets; failed rollouts are dropped.

    When ``out_dir`` is given, episodes are written to ``out_dir/<task>/episode_NNNNN.mote``.
    """
    if n < 1:
        raise ValueError("need at least one demonstration")
    env = ToyEnv(task, image_size)
    kept = []
    for i, s in enumerate(episode_seeds(seed, n)):
        ep, ok = rollout_expert(env, s)
        if ok:
            ep.name = f"episode_{i:05d}"
            kept.append(ep)
    rate = len(kept) / n
    if rate < min_success_rate:
        raise ExpertFailure(
            f"scripted expert solved {len(kept)}/{n} resets of task {task.name!r} "
            f"(below {min_success_rate:.0%}); the task definition is probably infeasible"
        )
    if out_dir is not None:
        for ep in kept:
            save_episode(ep, Path(out_dir) / task.name / ep.name)
    return kept


def replay(env: ToyEnv, seed: int, actions) -> list[EnvState]:
    """States visited when ``actions`` are applied from the seeded reset, starting with the reset state."""
    state, _ = env.reset(seed)
    states = [state]
    for a in actions:
        state, _ = env.step(state, a)
        states.append(state)
    return states
