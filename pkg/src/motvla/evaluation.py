"""Trial execution, Success Rate / Progress Score, and report files."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .env import ACTION_DIM, Observation, TaskSpec, ToyEnv

COMPLETED = "completed"
STEP_BUDGET = "step_budget"
CONSECUTIVE_FAILURES = "consecutive_failures"
POLICY_ERROR = "policy_error"

DEFAULT_WINDOW = 50
MAX_CONSECUTIVE_FAILURES = 3


class Policy(Protocol):
    def reset(self, task: TaskSpec, seed: int) -> None: ...

    def act(self, obs: Observation) -> np.ndarray: ...


@dataclass
class TrialResult:
    task_id: str
    seed: int
    checkpoints_completed: int
    total_checkpoints: int
    success: bool
    termination_reason: str
    steps_used: int
    diagnostic: str = ""

    def __post_init__(self):
        if not 0 <= self.checkpoints_completed <= self.total_checkpoints:
            raise ValueError(f"completed {self.checkpoints_completed} outside [0, {self.total_checkpoints}]")
        if self.success != (self.checkpoints_completed == self.total_checkpoints):
            raise ValueError("success must coincide with completing every checkpoint")

    @property
    def progress(self) -> float:
        return progress_score(self.checkpoints_completed, self.total_checkpoints)


@dataclass
class StepRecord:
    step: int
    action: list[float]
    checkpoints: int


@dataclass
class Trial:
    result: TrialResult
    log: list[StepRecord] = field(default_factory=list)


def progress_score(completed: int, total: int) -> float:
    if total < 1:
        raise ValueError("progress_score needs at least one checkpoint")
    if not 0 <= completed <= total:
        raise ValueError(f"completed {completed} outside [0, {total}]")
    return completed / total


def run_trial(policy: Policy, env: ToyEnv, seed: int, window: int = DEFAULT_WINDOW,
              max_failures: int = MAX_CONSECUTIVE_FAILURES) -> Trial:
    """Roll out ``policy`` until success, the step budget, or repeated stalls.

    Every ``window`` consecutive steps without a new checkpoint count as one
    subtask failure; progress resets the count.
    """
    task = env.task
    state, obs = env.reset(seed)
    policy.reset(task, seed)
    log: list[StepRecord] = []
    since_progress = failures = 0
    reason, diagnostic = None, ""
    while reason is None:
        if env.done(state):
            reason = COMPLETED
            break
        if state.steps >= task.max_steps:
            reason = STEP_BUDGET
            break
        try:
            action = np.asarray(policy.act(obs), dtype=np.float64)
            if action.shape != (ACTION_DIM,) or not np.all(np.isfinite(action)):
                raise FloatingPointError(f"policy emitted invalid action {action!r} at step {state.steps}")
        except (FloatingPointError, ValueError) as exc:
            reason, diagnostic = POLICY_ERROR, str(exc)
            break
        state, progress = env.step(state, action)
        obs = env.observe(state)
        log.append(StepRecord(state.steps, action.tolist(), state.checkpoints_done))
        if progress:
            since_progress = failures = 0
        else:
            since_progress += 1
            if since_progress >= window:
                failures += 1
                since_progress = 0
                if failures >= max_failures:
                    reason = CONSECUTIVE_FAILURES
    done = state.checkpoints_done
    result = TrialResult(task.name, int(seed), done, task.num_checkpoints, done == task.num_checkpoints,
                         reason, state.steps, diagnostic)
    return Trial(result, log)


@dataclass
class TaskRow:
    task_id: str
    n_trials: int
    sr: float
    ps: float


@dataclass
class EvalReport:
    rows: list[TaskRow]
    sr: float
    ps: float
    trials: dict[str, list[Trial]] = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "overall": {"SR": self.sr, "PS": self.ps, "n_tasks": len(self.rows)},
            "tasks": [asdict(r) for r in self.rows],
            "trials": {
                task: [asdict(t.result) for t in trials] for task, trials in self.trials.items()
            },
        }


def overall_means(rows: Sequence[TaskRow]) -> tuple[float, float]:
    """Unweighted mean over tasks, independent of per-task trial counts."""
    if not rows:
        raise ValueError("no task rows to aggregate")
    return float(np.mean([r.sr for r in rows])), float(np.mean([r.ps for r in rows]))


def aggregate(results: Mapping[str, Sequence[TrialResult | Trial]]) -> EvalReport:
    if not results:
        raise ValueError("aggregate: no results")
    rows, trials = [], {}
    for task_id, items in results.items():
        items = list(items)
        if not items:
            raise ValueError(f"aggregate: task {task_id!r} has no trials")
        res = [t.result if isinstance(t, Trial) else t for t in items]
        rows.append(TaskRow(task_id, len(res), float(np.mean([r.success for r in res])),
                            float(np.mean([r.progress for r in res]))))
        trials[task_id] = [t if isinstance(t, Trial) else Trial(t) for t in items]
    sr, ps = overall_means(rows)
    return EvalReport(rows, sr, ps, trials)


def evaluate(policy: Policy, tasks: Iterable[TaskSpec], seeds: Sequence[int], image_size: int = 32,
             window: int = DEFAULT_WINDOW) -> EvalReport:
    results = {}
    for task in tasks:
        env = ToyEnv(task, image_size)
        results[task.name] = [run_trial(policy, env, s, window) for s in seeds]
    return aggregate(results)


def write_report(report: EvalReport, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "report.csv", "json": out / "summary.json", "trials": out / "trials.jsonl"}
    with paths["csv"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task_id", "n_trials", "SR", "PS"])
        for r in report.rows:
            w.writerow([r.task_id, r.n_trials, repr(r.sr), repr(r.ps)])
    paths["json"].write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with paths["trials"].open("w", encoding="utf-8") as fh:
        for task_id, trials in report.trials.items():
            for trial in trials:
                for rec in trial.log:
                    fh.write(json.dumps({"task_id": task_id, "seed": trial.result.seed, **asdict(rec)}) + "\n")
    return paths
