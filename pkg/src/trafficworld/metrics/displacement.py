"""Displacement metrics: minADE / minFDE / miss rate over parallel rollouts."""
from __future__ import annotations

import math

import numpy as np

from ..synthworld.types import Frame

MISS_THRESHOLD_M = 2.0


def _positions(frames: list[Frame], agent_id: int) -> np.ndarray:
    """(T, 2) with NaN where the agent is absent."""
    out = np.full((len(frames), 2), np.nan)
    for t, fr in enumerate(frames):
        a = fr.agent_by_id(agent_id)
        if a is not None and a.valid:
            out[t] = (a.x, a.y)
    return out


def displacement_metrics(rollout_frames: list[list[Frame]], gt_frames: list[Frame],
                         horizon_steps: int | None = None,
                         agent_ids: list[int] | None = None,
                         miss_threshold: float = MISS_THRESHOLD_M
                         ) -> dict[str, float]:
    """min over rollouts of mean/final L2 to ground truth, averaged over
    agents; miss = best final error above the threshold."""
    if not rollout_frames:
        raise ValueError("no rollouts")
    T = horizon_steps if horizon_steps is not None else len(gt_frames)
    T = min(T, len(gt_frames), *(len(fr) for fr in rollout_frames))
    if agent_ids is None:
        agent_ids = sorted({a.agent_id for f in gt_frames[:T] for a in f.valid_agents()})
    ades, fdes, misses = [], [], []
    for aid in agent_ids:
        gt = _positions(gt_frames[:T], aid)
        valid_t = ~np.isnan(gt[:, 0])
        if not valid_t.any():
            continue
        best_ade, best_fde = math.inf, math.inf
        last_t = int(np.nonzero(valid_t)[0][-1])
        for frames in rollout_frames:
            ro = _positions(frames[:T], aid)
            both = valid_t & ~np.isnan(ro[:, 0])
            if not both.any():
                continue
            err = np.linalg.norm(ro[both] - gt[both], axis=1)
            best_ade = min(best_ade, float(err.mean()))
            if both[last_t]:
                fde = float(np.linalg.norm(ro[last_t] - gt[last_t]))
            else:
                fde = float(err[-1])
            best_fde = min(best_fde, fde)
        if math.isinf(best_ade):
            continue
        ades.append(best_ade)
        fdes.append(best_fde)
        misses.append(1.0 if best_fde > miss_threshold else 0.0)
    if not ades:
        raise ValueError("no comparable agents between rollouts and ground truth")
    return {"minADE": float(np.mean(ades)), "minFDE": float(np.mean(fdes)),
            "miss_rate": float(np.mean(misses))}
