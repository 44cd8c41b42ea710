"""Planar dual-arm kinematics with latched subtask checkpoints."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

NUM_ARMS = 2
ACTION_DIM = 3 * NUM_ARMS
STATE_DIM = 3 * NUM_ARMS
FREE = -1


class LayoutError(RuntimeError):
    """No layout satisfying the task's separation constraints was found."""


@dataclass(frozen=True)
class Checkpoint:
    """A named predicate over the scene; ``args`` are arm/object/goal indices."""

    kind: str
    args: tuple[int, ...]

    KINDS = {"reach": 2, "grasp": 2, "transport": 3, "release": 2}

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown checkpoint kind {self.kind!r}")
        if len(self.args) != self.KINDS[self.kind]:
            raise ValueError(f"{self.kind} takes {self.KINDS[self.kind]} arguments, got {self.args}")

    def __str__(self) -> str:
        return f"{self.kind}({','.join(map(str, self.args))})"

    @classmethod
    def parse(cls, text: str) -> "Checkpoint":
        text = text.strip()
        name, _, rest = text.partition("(")
        if not rest.endswith(")"):
            raise ValueError(f"malformed checkpoint {text!r}")
        args = tuple(int(a) for a in rest[:-1].split(",") if a.strip())
        return cls(name.strip(), args)


Range = tuple[float, float, float, float]


@dataclass(frozen=True)
class TaskSpec:
    name: str
    instruction: str
    checkpoints: tuple[Checkpoint, ...]
    max_steps: int
    effector_ranges: tuple[Range, ...]
    object_ranges: tuple[Range, ...]
    goal_ranges: tuple[Range, ...] = ()
    min_separation: float = 0.2
    max_speed: float = 0.05
    grasp_radius: float = 0.06
    reach_radius: float = 0.05
    goal_radius: float = 0.08
    contact_radius: float = 0.1
    contact_speed_scale: float = 0.5
    crop_size: float = 0.5

    def __post_init__(self):
        if not self.checkpoints:
            raise ValueError(f"task {self.name!r} has no checkpoints")
        if len(self.effector_ranges) != NUM_ARMS:
            raise ValueError(f"task {self.name!r} needs {NUM_ARMS} effector ranges")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        for cp in self.checkpoints:
            arms, objs, goals = _checkpoint_refs(cp)
            if any(a >= NUM_ARMS for a in arms) or any(o >= len(self.object_ranges) for o in objs) \
                    or any(g >= len(self.goal_ranges) for g in goals):
                raise ValueError(f"checkpoint {cp} refers to a missing arm/object/goal")
        for r in self.effector_ranges + self.object_ranges + self.goal_ranges:
            x0, x1, y0, y1 = r
            if not (0.0 <= x0 <= x1 <= 1.0 and 0.0 <= y0 <= y1 <= 1.0):
                raise ValueError(f"range {r} is not inside the unit workspace")

    @property
    def num_checkpoints(self) -> int:
        return len(self.checkpoints)


def _checkpoint_refs(cp: Checkpoint):
    a = cp.args
    if cp.kind in ("reach", "grasp"):
        return (a[0],), (a[1],), ()
    if cp.kind == "transport":
        return (a[0],), (a[1],), (a[2],)
    return (), (a[0],), (a[1],)


@dataclass(frozen=True)
class EnvState:
    effectors: np.ndarray          # [arms, 2]
    grippers: np.ndarray           # [arms] bool, True = closed
    objects: np.ndarray            # [K, 2]
    held_by: np.ndarray            # [K] arm index or FREE
    goals: np.ndarray              # [G, 2]
    steps: int = 0
    checkpoints_done: int = 0

    def proprio(self) -> np.ndarray:
        """[x0, y0, closed0, x1, y1, closed1]."""
        out = np.empty(STATE_DIM)
        for arm in range(NUM_ARMS):
            out[3 * arm : 3 * arm + 2] = self.effectors[arm]
            out[3 * arm + 2] = float(self.grippers[arm])
        return out

    def same_as(self, other: "EnvState", tol: float = 0.0) -> bool:
        return (
            self.steps == other.steps
            and self.checkpoints_done == other.checkpoints_done
            and np.array_equal(self.grippers, other.grippers)
            and np.array_equal(self.held_by, other.held_by)
            and all(np.allclose(a, b, atol=tol, rtol=0) for a, b in
                    ((self.effectors, other.effectors), (self.objects, other.objects), (self.goals, other.goals)))
        )


def _uniform(rng: np.random.Generator, r: Range) -> np.ndarray:
    return np.array([rng.uniform(r[0], r[1]), rng.uniform(r[2], r[3])])


def sample_layout(task: TaskSpec, seed: int, max_attempts: int = 1000) -> EnvState:
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        eff = np.array([_uniform(rng, r) for r in task.effector_ranges])
        objs = np.array([_uniform(rng, r) for r in task.object_ranges]).reshape(-1, 2)
        goals = np.array([_uniform(rng, r) for r in task.goal_ranges]).reshape(-1, 2)
        points = np.concatenate([eff[:1], objs, goals]) if len(objs) else eff[:1]
        # the first effector starts the task; every other point must keep its distance
        if len(points) > 1:
            d = np.linalg.norm(points[:, None] - points[None], axis=-1)
            np.fill_diagonal(d, np.inf)
            if d.min() < task.min_separation:
                continue
        return EnvState(
            effectors=eff,
            grippers=np.zeros(NUM_ARMS, dtype=bool),
            objects=objs,
            held_by=np.full(len(objs), FREE, dtype=np.int64),
            goals=goals,
        )
    raise LayoutError(f"task {task.name!r}: no feasible layout in {max_attempts} attempts (seed {seed})")


def checkpoint_satisfied(task: TaskSpec, state: EnvState, cp: Checkpoint) -> bool:
    a = cp.args
    if cp.kind == "reach":
        return bool(np.linalg.norm(state.effectors[a[0]] - state.objects[a[1]]) < task.reach_radius)
    if cp.kind == "grasp":
        return bool(state.held_by[a[1]] == a[0])
    if cp.kind == "transport":
        return bool(state.held_by[a[1]] == a[0]
                    and np.linalg.norm(state.objects[a[1]] - state.goals[a[2]]) < task.goal_radius)
    return bool(state.held_by[a[0]] == FREE
                and np.linalg.norm(state.objects[a[0]] - state.goals[a[1]]) < task.goal_radius)


def advance_checkpoints(task: TaskSpec, state: EnvState) -> int:
    """Latched count after checking the next checkpoints in order."""
    done = state.checkpoints_done
    while done < task.num_checkpoints and checkpoint_satisfied(task, state, task.checkpoints[done]):
        done += 1
    return done


def clamp_velocity(v: np.ndarray, max_speed: float) -> np.ndarray:
    speed = float(np.hypot(v[0], v[1]))
    if speed > max_speed:
        return v * (max_speed / speed)
    return v


def physics_step(task: TaskSpec, state: EnvState, action) -> tuple[EnvState, int]:
    """Advance one step; returns the new state and the number of checkpoints newly latched."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (ACTION_DIM,):
        raise ValueError(f"action must have {ACTION_DIM} entries, got shape {action.shape}")
    if not np.all(np.isfinite(action)):
        raise ValueError(f"non-finite action {action}")
    eff = state.effectors.copy()
    objs = state.objects.copy()
    held = state.held_by.copy()
    closed = np.array([action[3 * arm + 2] > 0.0 for arm in range(NUM_ARMS)])

    for arm in range(NUM_ARMS):
        if not closed[arm]:
            held[held == arm] = FREE

    for arm in range(NUM_ARMS):
        vel = clamp_velocity(action[3 * arm : 3 * arm + 2], task.max_speed)
        new = np.clip(eff[arm] + vel, 0.0, 1.0)
        carried = held == arm
        objs[carried] = np.clip(objs[carried] + (new - eff[arm]), 0.0, 1.0)
        eff[arm] = new

    for arm in range(NUM_ARMS):
        if closed[arm] and not np.any(held == arm) and len(objs):
            free = np.flatnonzero(held == FREE)
            if len(free):
                d = np.linalg.norm(objs[free] - eff[arm], axis=1)
                j = int(np.argmin(d))
                if d[j] < task.grasp_radius:
                    held[free[j]] = arm

    nxt = replace(state, effectors=eff, grippers=closed, objects=objs, held_by=held, steps=state.steps + 1)
    done = advance_checkpoints(task, nxt)
    progress = done - state.checkpoints_done
    return replace(nxt, checkpoints_done=done), progress
