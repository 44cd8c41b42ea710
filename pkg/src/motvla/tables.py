"""Published GM-100 per-task SR/PS rows and their platform-level summary.

Values are percentages as printed.  Platform averages are recomputed with the
same unweighted task mean used for toy evaluations.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from importlib import resources

from .evaluation import TaskRow, overall_means

PER_TASK = "gm100_per_task.csv"
SUMMARY = "gm100_platform_summary.csv"
AVERAGE = "Average"


def _read(name: str) -> list[dict[str, str]]:
    with resources.files("motvla.resources").joinpath(name).open(encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def per_task_rows() -> list[dict[str, str]]:
    return _read(PER_TASK)


def published_summary() -> dict[tuple[str, str], tuple[float, float]]:
    return {(r["platform"], r["model"]): (float(r["SR"]), float(r["PS"])) for r in _read(SUMMARY)}


def reconstruct_summary(rows=None) -> dict[tuple[str, str], tuple[float, float]]:
    """Per (platform, model) unweighted task means, plus an ``Average`` row over platforms."""
    grouped: dict[tuple[str, str], list[TaskRow]] = defaultdict(list)
    for r in rows if rows is not None else per_task_rows():
        task_id = f"{r['part']}/{r['task']}"
        grouped[(r["platform"], r["model"])].append(TaskRow(task_id, 1, float(r["SR"]), float(r["PS"])))
    out = {key: overall_means(task_rows) for key, task_rows in grouped.items()}
    by_model: dict[str, list[TaskRow]] = defaultdict(list)
    for (platform, model), (sr, ps) in out.items():
        by_model[model].append(TaskRow(platform, 1, sr, ps))
    for model, platform_rows in by_model.items():
        out[(AVERAGE, model)] = overall_means(platform_rows)
    return out


def max_reconstruction_error() -> float:
    published = published_summary()
    rebuilt = reconstruct_summary()
    if set(published) != set(rebuilt):
        raise ValueError(f"row sets differ: {sorted(set(published) ^ set(rebuilt))}")
    return max(abs(a - b) for k in published for a, b in zip(published[k], rebuilt[k]))
