from .episodes import (
    Episode,
    EpisodeFormatError,
    decode_episode,
    encode_episode,
    load_dataset,
    load_episode,
    save_episode,
)
from .pipeline import (
    Batch,
    NormStats,
    StaticEpisodeError,
    TrainingSample,
    action_chunk,
    collate,
    compute_norm_stats,
    denormalize,
    make_training_sample,
    normalize,
    sample_index,
    shuffled_batches,
    subsample_episodes,
    trim_static_frames,
)

__all__ = [
    "Batch",
    "Episode",
    "EpisodeFormatError",
    "NormStats",
    "StaticEpisodeError",
    "TrainingSample",
    "action_chunk",
    "collate",
    "compute_norm_stats",
    "decode_episode",
    "denormalize",
    "encode_episode",
    "load_dataset",
    "load_episode",
    "make_training_sample",
    "normalize",
    "sample_index",
    "save_episode",
    "shuffled_batches",
    "subsample_episodes",
    "trim_static_frames",
]
