from ..masking import ACTION, OBSERVATION, BlockMaskSpec, build_block_mask, route_pathway
from .config import NUM_VIEWS, ModelConfig
from .mot import (
    MoTOutput,
    MoTParams,
    ObservationContext,
    embed_actions,
    encode_observation,
    flow_time_embedding,
    forward_mot,
    init_params,
    patchify,
    tie_pathways,
    time_features,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "ACTION",
    "NUM_VIEWS",
    "OBSERVATION",
    "BlockMaskSpec",
    "CheckpointError",
    "ModelConfig",
    "MoTOutput",
    "MoTParams",
    "ObservationContext",
    "build_block_mask",
    "embed_actions",
    "encode_observation",
    "flow_time_embedding",
    "forward_mot",
    "init_params",
    "load_checkpoint",
    "patchify",
    "route_pathway",
    "save_checkpoint",
    "tie_pathways",
    "time_features",
]
