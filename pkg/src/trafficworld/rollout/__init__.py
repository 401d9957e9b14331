from .sampler import SamplerConfig, greedy_token, masked_probabilities, sample_token
from .aggregate import DEFAULT_GAMMA, ChunkAggregator, aggregate_chunks
from .engine import (MODE_FULL_AR, MODE_PARTIAL_AR, RolloutBatch, RolloutEngine,
                     SimState)
from .post import interpolate_10hz, smooth_traj
from .persist import load_rollout_batch, save_rollout_batch

__all__ = [
    "SamplerConfig", "sample_token", "greedy_token", "masked_probabilities",
    "ChunkAggregator", "aggregate_chunks", "DEFAULT_GAMMA",
    "RolloutEngine", "RolloutBatch", "SimState", "MODE_FULL_AR", "MODE_PARTIAL_AR",
    "smooth_traj", "interpolate_10hz",
    "save_rollout_batch", "load_rollout_batch",
]
