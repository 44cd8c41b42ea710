"""Deterministic planar dual-arm manipulation environment."""

from .core import (
    ACTION_DIM,
    FREE,
    NUM_ARMS,
    STATE_DIM,
    Checkpoint,
    EnvState,
    LayoutError,
    TaskSpec,
    advance_checkpoints,
    physics_step,
    sample_layout,
)
from .expert import scripted_expert
from .render import render_view, render_views
from .tasks import REFERENCE_TASKS, VOCAB, dump_task, parse_task, resolve_task, tokenize
from .toy import ExpertFailure, Observation, ToyEnv, collect_demonstrations, episode_seeds, replay, rollout_expert

__all__ = [
    "ACTION_DIM",
    "FREE",
    "NUM_ARMS",
    "REFERENCE_TASKS",
    "STATE_DIM",
    "VOCAB",
    "Checkpoint",
    "EnvState",
    "ExpertFailure",
    "LayoutError",
    "Observation",
    "TaskSpec",
    "ToyEnv",
    "advance_checkpoints",
    "collect_demonstrations",
    "dump_task",
    "episode_seeds",
    "parse_task",
    "physics_step",
    "render_view",
    "render_views",
    "replay",
    "resolve_task",
    "rollout_expert",
    "sample_layout",
    "scripted_expert",
    "tokenize",
]
