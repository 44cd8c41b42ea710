"""Privileged proportional controller that solves the reference tasks."""

from __future__ import annotations

import numpy as np

from .core import ACTION_DIM, FREE, NUM_ARMS, EnvState, TaskSpec

OPEN, CLOSE = -1.0, 1.0


def approach_velocity(task: TaskSpec, effector: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Straight-line velocity toward ``target``; slower inside the contact radius, never overshooting."""
    offset = target - effector
    dist = float(np.hypot(offset[0], offset[1]))
    if dist < 1e-12:
        return np.zeros(2)
    speed = task.max_speed
    if dist < task.contact_radius:
        speed *= task.contact_speed_scale
    return offset / dist * min(speed, dist)


def scripted_expert(state: EnvState, task: TaskSpec) -> np.ndarray:
    action = np.zeros(ACTION_DIM)
    targets: list[np.ndarray | None] = [None] * NUM_ARMS
    grip = [CLOSE if np.any(state.held_by == arm) else OPEN for arm in range(NUM_ARMS)]

    if state.checkpoints_done < task.num_checkpoints:
        cp = task.checkpoints[state.checkpoints_done]
        a = cp.args
        if cp.kind == "reach":
            targets[a[0]] = state.objects[a[1]]
            grip[a[0]] = OPEN
        elif cp.kind == "grasp":
            arm, obj = a
            targets[arm] = state.objects[obj]
            near = np.linalg.norm(state.effectors[arm] - state.objects[obj]) < task.grasp_radius
            grip[arm] = CLOSE if near else OPEN
            holder = int(state.held_by[obj])
            if near and holder not in (FREE, arm):
                grip[holder] = OPEN
        elif cp.kind == "transport":
            arm, obj, goal = a
            # place the object, not the effector, on the goal
            targets[arm] = state.goals[goal] + (state.effectors[arm] - state.objects[obj])
            grip[arm] = CLOSE
        else:
            obj = a[0]
            holder = int(state.held_by[obj])
            if holder != FREE:
                grip[holder] = OPEN

    for arm in range(NUM_ARMS):
        if targets[arm] is not None:
            action[3 * arm : 3 * arm + 2] = approach_velocity(task, state.effectors[arm], targets[arm])
        action[3 * arm + 2] = grip[arm]
    return action
