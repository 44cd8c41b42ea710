"""Reference task suite, instruction vocabulary and the key=value task file format.

A task file looks like::

    name=pick_place
    instruction=pick the block and place it in the goal
    max_steps=150
    checkpoints=reach(0,0);grasp(0,0);transport(0,0,0);release(0,0)
    effector0=0.1,0.9,0.1,0.9
    effector1=0.9,0.95,0.05,0.1
    object0=0.15,0.85,0.15,0.85
    goal0=0.15,0.85,0.15,0.85

``objectN`` / ``goalN`` keys are numbered from 0 without gaps.  Any physical
constant of :class:`TaskSpec` (``max_speed``, ``grasp_radius``, ...) may be set.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

import numpy as np

from .core import Checkpoint, TaskSpec

VOCAB = (
    "<pad>", "reach", "the", "block", "pick", "and", "place", "it", "in", "goal",
    "hand", "to", "right", "left", "arm", "over", "move", "grasp", "release", "put",
)
WORD_IDS = {w: i for i, w in enumerate(VOCAB)}

PARK_RIGHT = (0.85, 0.95, 0.05, 0.15)

REFERENCE_TASKS: dict[str, TaskSpec] = {
    "reach": TaskSpec(
        name="reach",
        instruction="reach the block",
        checkpoints=(Checkpoint("reach", (0, 0)),),
        max_steps=60,
        effector_ranges=((0.1, 0.9, 0.1, 0.9), PARK_RIGHT),
        object_ranges=((0.1, 0.9, 0.1, 0.9),),
        min_separation=0.2,
    ),
    "pick_place": TaskSpec(
        name="pick_place",
        instruction="pick the block and place it in the goal",
        checkpoints=(
            Checkpoint("reach", (0, 0)),
            Checkpoint("grasp", (0, 0)),
            Checkpoint("transport", (0, 0, 0)),
            Checkpoint("release", (0, 0)),
        ),
        max_steps=150,
        effector_ranges=((0.1, 0.9, 0.1, 0.9), PARK_RIGHT),
        object_ranges=((0.15, 0.85, 0.15, 0.85),),
        goal_ranges=((0.15, 0.85, 0.15, 0.85),),
        min_separation=0.2,
    ),
    "handover": TaskSpec(
        name="handover",
        instruction="hand the block to the right arm",
        checkpoints=(
            Checkpoint("reach", (0, 0)),
            Checkpoint("grasp", (0, 0)),
            Checkpoint("transport", (0, 0, 0)),
            Checkpoint("grasp", (1, 0)),
            Checkpoint("transport", (1, 0, 1)),
            Checkpoint("release", (0, 1)),
        ),
        max_steps=250,
        effector_ranges=((0.05, 0.35, 0.1, 0.9), (0.65, 0.95, 0.1, 0.9)),
        object_ranges=((0.1, 0.4, 0.1, 0.9),),
        goal_ranges=((0.45, 0.55, 0.4, 0.6), (0.7, 0.9, 0.15, 0.85)),
        min_separation=0.15,
    ),
}


def tokenize(instruction: str) -> np.ndarray:
    words = instruction.lower().split()
    unknown = [w for w in words if w not in WORD_IDS]
    if unknown:
        raise ValueError(f"instruction words not in vocabulary: {unknown}")
    return np.array([WORD_IDS[w] for w in words], dtype=np.int64)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def parse_task(text: str) -> TaskSpec:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"task file line {lineno}: expected key=value, got {raw!r}")
        values[key.strip()] = value.strip()

    def numbered(prefix: str) -> tuple:
        out = []
        while f"{prefix}{len(out)}" in values:
            out.append(_floats(values.pop(f"{prefix}{len(out)}")))
        return tuple(out)

    try:
        kwargs = {
            "name": values.pop("name"),
            "instruction": values.pop("instruction"),
            "max_steps": int(values.pop("max_steps")),
            "checkpoints": tuple(Checkpoint.parse(c) for c in values.pop("checkpoints").split(";") if c.strip()),
        }
    except KeyError as exc:
        raise ValueError(f"task file is missing required key {exc.args[0]}") from None
    kwargs["effector_ranges"] = numbered("effector")
    kwargs["object_ranges"] = numbered("object")
    kwargs["goal_ranges"] = numbered("goal")
    floats = {f.name for f in fields(TaskSpec) if isinstance(f.default, float)}
    for key in list(values):
        if key in floats:
            kwargs[key] = float(values.pop(key))
    if values:
        raise ValueError(f"unknown task file keys: {sorted(values)}")
    return TaskSpec(**kwargs)


def dump_task(task: TaskSpec) -> str:
    lines = [
        f"name={task.name}",
        f"instruction={task.instruction}",
        f"max_steps={task.max_steps}",
        "checkpoints=" + ";".join(str(c) for c in task.checkpoints),
    ]
    for prefix, ranges in (("effector", task.effector_ranges), ("object", task.object_ranges),
                           ("goal", task.goal_ranges)):
        for i, r in enumerate(ranges):
            lines.append(f"{prefix}{i}=" + ",".join(repr(float(x)) for x in r))
    for f in fields(TaskSpec):
        if isinstance(f.default, float):
            lines.append(f"{f.name}={getattr(task, f.name)!r}")
    return "\n".join(lines) + "\n"


def resolve_task(name_or_path: str) -> TaskSpec:
    """A reference task by name, or a task file by path."""
    if name_or_path in REFERENCE_TASKS:
        return REFERENCE_TASKS[name_or_path]
    path = Path(name_or_path)
    if path.suffix == ".task" and path.is_file():
        return parse_task(path.read_text(encoding="utf-8"))
    raise KeyError(f"unknown task {name_or_path!r}; reference tasks are {sorted(REFERENCE_TASKS)}")

