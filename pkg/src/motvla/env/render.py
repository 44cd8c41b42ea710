"""Grayscale rasterisation of the scene from three viewpoints.

View 0 is an orthographic overhead camera of the whole workspace showing
goals and objects.  Views 1 and 2 are crops of side ``crop_size`` centred on
each effector; they show goals, objects and the other arm's effector.  The
owning effector sits at the crop centre and is not drawn.
"""

from __future__ import annotations

import numpy as np

from .core import NUM_ARMS, EnvState, TaskSpec

BACKGROUND = 0
GOAL = 80
OBJECT = 170
EFFECTOR = 255
MARKER_HALF = 0.05
GOAL_HALF = 0.06


def pixel_centres(image_size: int, centre=(0.5, 0.5), extent: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """World (x, y) of each pixel centre; rows run along y, columns along x."""
    u = ((np.arange(image_size) + 0.5) / image_size - 0.5) * extent
    return centre[0] + u[None, :], centre[1] + u[:, None]


def _paint(img: np.ndarray, xs, ys, points: np.ndarray, half: float, value: int) -> None:
    for p in points:
        hit = (np.abs(xs - p[0]) <= half) & (np.abs(ys - p[1]) <= half)
        img[hit] = value


def render_view(state: EnvState, image_size: int, centre=(0.5, 0.5), extent: float = 1.0,
                effectors: np.ndarray | None = None) -> np.ndarray:
    xs, ys = pixel_centres(image_size, centre, extent)
    img = np.full((image_size, image_size), BACKGROUND, dtype=np.uint8)
    _paint(img, xs, ys, state.goals, GOAL_HALF, GOAL)
    _paint(img, xs, ys, state.objects, MARKER_HALF, OBJECT)
    if effectors is not None:
        _paint(img, xs, ys, effectors, MARKER_HALF, EFFECTOR)
    return img


def render_views(state: EnvState, image_size: int, task: TaskSpec | None = None) -> np.ndarray:
    """[3, image_size, image_size] uint8 images."""
    crop = task.crop_size if task is not None else 0.5
    views = [render_view(state, image_size)]
    for arm in range(NUM_ARMS):
        others = np.delete(state.effectors, arm, axis=0)
        views.append(render_view(state, image_size, tuple(state.effectors[arm]), crop, others))
    return np.stack(views)
