"""Three-block partition of the joint sequence and its attention mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OBSERVATION = "observation"
ACTION = "action"


@dataclass(frozen=True)
class BlockMaskSpec:
    """Lengths of the observation, state and action blocks, in sequence order."""

    obs_len: int
    state_len: int = 1
    action_len: int = 0

    def __post_init__(self):
        if min(self.obs_len, self.state_len, self.action_len) < 0:
            raise ValueError(f"block lengths must be nonnegative: {self}")

    @property
    def total(self) -> int:
        return self.obs_len + self.state_len + self.action_len

    def bounds(self) -> list[tuple[int, int]]:
        """(start, stop) of each block, including empty ones."""
        a = self.obs_len
        b = a + self.state_len
        return [(0, a), (a, b), (b, self.total)]

    def block_ids(self) -> np.ndarray:
        return np.repeat(np.arange(3), [self.obs_len, self.state_len, self.action_len])


def build_block_mask(spec: BlockMaskSpec) -> np.ndarray:
    """Boolean L x L mask: query q may read key k iff block(k) <= block(q)."""
    if spec.total < 1:
        raise ValueError("build_block_mask: all block lengths are zero")
    ids = spec.block_ids()
    return ids[None, :] <= ids[:, None]


def route_pathway(token_index: int, spec: BlockMaskSpec, state_pathway: str = OBSERVATION) -> str:
    """Which parameter set processes the token at ``token_index``."""
    if not 0 <= token_index < spec.total:
        raise IndexError(f"token index {token_index} outside sequence of length {spec.total}")
    if token_index < spec.obs_len:
        return OBSERVATION
    if token_index < spec.obs_len + spec.state_len:
        return state_pathway
    return ACTION
