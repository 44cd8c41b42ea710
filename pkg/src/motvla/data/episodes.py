"""Episode container and its on-disk format.

Binary episode file (little-endian)::

    b"MOTE"  u32 version
    u32 n_steps, u32 n_views, u32 image_size, u32 state_dim, u32 action_dim, u32 n_instruction
    n_instruction x u32 token ids
    n_steps x (n_views * image_size^2 bytes of pixels, state_dim x f64, action_dim x f64)

Each file ``<stem>.mote`` has a sidecar ``<stem>.meta`` of UTF-8 key=value lines
holding ``task_id``, ``checkpoints`` and ``seed``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"MOTE"
VERSION = 1
SUFFIX = ".mote"


class EpisodeFormatError(ValueError):
    pass


@dataclass
class Episode:
    images: np.ndarray        # [N, views, S, S] uint8
    instruction: np.ndarray   # [n] int64
    states: np.ndarray        # [N, state_dim]
    actions: np.ndarray       # [N, action_dim]
    task_id: str
    num_checkpoints: int
    seed: int
    name: str = ""

    def __post_init__(self):
        n = len(self.images)
        if n < 1 or len(self.states) != n or len(self.actions) != n:
            raise ValueError(
                f"episode {self.name or self.seed}: per-step arrays must share a length >= 1, got "
                f"{len(self.images)}, {len(self.states)}, {len(self.actions)}"
            )

    def __len__(self) -> int:
        return len(self.images)

    def slice(self, start: int, stop: int) -> "Episode":
        return Episode(self.images[start:stop], self.instruction, self.states[start:stop],
                       self.actions[start:stop], self.task_id, self.num_checkpoints, self.seed, self.name)

    def equals(self, other: "Episode") -> bool:
        return (
            self.task_id == other.task_id
            and self.num_checkpoints == other.num_checkpoints
            and self.seed == other.seed
            and all(np.array_equal(a, b) for a, b in (
                (self.images, other.images), (self.instruction, other.instruction),
                (self.states, other.states), (self.actions, other.actions)))
        )


def encode_episode(ep: Episode) -> bytes:
    images = np.ascontiguousarray(ep.images, dtype=np.uint8)
    n, views, size, _ = images.shape
    states = np.ascontiguousarray(ep.states, dtype="<f8")
    actions = np.ascontiguousarray(ep.actions, dtype="<f8")
    instr = np.ascontiguousarray(ep.instruction, dtype="<u4")
    head = MAGIC + struct.pack("<7I", VERSION, n, views, size, states.shape[1], actions.shape[1], len(instr))
    body = [head, instr.tobytes()]
    for t in range(n):
        body += [images[t].tobytes(), states[t].tobytes(), actions[t].tobytes()]
    return b"".join(body)


def decode_episode(blob: bytes, meta: dict[str, str], name: str = "") -> Episode:
    if blob[:4] != MAGIC:
        raise EpisodeFormatError(f"{name}: bad magic {blob[:4]!r}")
    version, n, views, size, sd, ad, n_instr = struct.unpack_from("<7I", blob, 4)
    if version != VERSION:
        raise EpisodeFormatError(f"{name}: unsupported version {version}")
    pos = 4 + 28
    instr = np.frombuffer(blob, dtype="<u4", count=n_instr, offset=pos).astype(np.int64)
    pos += 4 * n_instr
    record = views * size * size + 8 * (sd + ad)
    if len(blob) - pos != n * record:
        raise EpisodeFormatError(f"{name}: expected {n * record} bytes of steps, found {len(blob) - pos}")
    rec = np.frombuffer(blob, dtype=np.uint8, offset=pos).reshape(n, record)
    npix = views * size * size
    images = rec[:, :npix].reshape(n, views, size, size).copy()
    floats = rec[:, npix:].copy().view("<f8").astype(np.float64)
    return Episode(images, instr, floats[:, :sd], floats[:, sd:], meta["task_id"],
                   int(meta["checkpoints"]), int(meta["seed"]), name)


def encode_meta(ep: Episode) -> str:
    return f"task_id={ep.task_id}\ncheckpoints={ep.num_checkpoints}\nseed={ep.seed}\n"


def parse_meta(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def save_episode(ep: Episode, path) -> Path:
    path = Path(path)
    if path.suffix != SUFFIX:
        path = path.with_suffix(SUFFIX)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_episode(ep))
    path.with_suffix(".meta").write_text(encode_meta(ep), encoding="utf-8")
    return path


def load_episode(path) -> Episode:
    path = Path(path)
    meta = parse_meta(path.with_suffix(".meta").read_text(encoding="utf-8"))
    return decode_episode(path.read_bytes(), meta, name=path.stem)


def load_dataset(root) -> list[Episode]:
    """All episodes under ``root`` (one directory per task), in sorted path order."""
    paths = sorted(Path(root).rglob(f"*{SUFFIX}"))
    if not paths:
        raise FileNotFoundError(f"no episode files under {root}")
    return [load_episode(p) for p in paths]
