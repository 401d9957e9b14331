"""Per-agent per-step feature extraction for the realism suite.

Nine features: linear speed, linear acceleration magnitude, angular speed,
angular acceleration magnitude, distance to nearest object, collision
indicator, time-to-collision, distance to road edge, road departure
indicator. Cells that cannot be computed (missing history, no neighbors)
are marked invalid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import (angle_diff, obb_signed_distance,
                        signed_distance_to_region)
from ..synthworld.types import Frame, MapModel, ScenarioLog, FRAME_DT

FEATURE_NAMES = (
    "linear_speed", "linear_accel", "angular_speed", "angular_accel",
    "dist_to_nearest", "collision", "ttc", "dist_to_road_edge",
    "road_departure",
)

KINEMATIC = FEATURE_NAMES[:4]
INTERACTIVE = FEATURE_NAMES[4:7]
MAP_BASED = FEATURE_NAMES[7:]

TTC_MAX = 15.0
FAR_PAIR = 25.0


@dataclass
class FeatureTable:
    agent_ids: list[int]
    values: dict[str, np.ndarray]    # (A, T) per feature
    valid: dict[str, np.ndarray]     # (A, T) bool per feature
    times: np.ndarray


def _pair_distance(a, b) -> float:
    dx, dy = b.x - a.x, b.y - a.y
    center = math.hypot(dx, dy)
    if center > FAR_PAIR:
        # far pairs: center distance minus half diagonals (cheap lower bound)
        return center - 0.5 * (math.hypot(a.w, a.l) + math.hypot(b.w, b.l))
    return obb_signed_distance(a.box(), b.box())


def _ttc(agent, others) -> float:
    """Gap over closing speed toward the followed agent, inf if opening."""
    c, s = math.cos(agent.theta), math.sin(agent.theta)
    v_self = agent.v_x * c + agent.v_y * s
    best = math.inf
    for o in others:
        fwd = (o.x - agent.x) * c + (o.y - agent.y) * s
        lat = -(o.x - agent.x) * s + (o.y - agent.y) * c
        if fwd <= 0.0 or abs(lat) > 0.5 * (agent.w + o.w) + 0.5:
            continue
        gap = fwd - 0.5 * (agent.l + o.l)
        if gap <= 0:
            return 0.0
        v_other = o.v_x * c + o.v_y * s
        closing = v_self - v_other
        if closing <= 1e-6:
            continue
        best = min(best, gap / closing)
    return best


def compute_features(frames: list[Frame], map_model: MapModel,
                     agent_ids: list[int] | None = None) -> FeatureTable:
    if len(frames) < 3:
        raise ValueError("need at least 3 frames (accelerations use 2nd differences)")
    if agent_ids is None:
        ids = sorted({a.agent_id for f in frames for a in f.valid_agents()})
    else:
        ids = list(agent_ids)
    A, T = len(ids), len(frames)
    idx = {aid: i for i, aid in enumerate(ids)}
    vals = {n: np.zeros((A, T)) for n in FEATURE_NAMES}
    ok = {n: np.zeros((A, T), dtype=bool) for n in FEATURE_NAMES}

    present = np.zeros((A, T), dtype=bool)
    speed = np.zeros((A, T))
    theta = np.zeros((A, T))
    for t, fr in enumerate(frames):
        agents = fr.valid_agents()
        for a in agents:
            if a.agent_id not in idx:
                continue
            i = idx[a.agent_id]
            present[i, t] = True
            speed[i, t] = a.speed()
            theta[i, t] = a.theta
            vals["linear_speed"][i, t] = a.speed()
            ok["linear_speed"][i, t] = True
            others = [o for o in agents if o.agent_id != a.agent_id]
            if others:
                d = min(_pair_distance(a, o) for o in others)
                vals["dist_to_nearest"][i, t] = d
                ok["dist_to_nearest"][i, t] = True
                vals["collision"][i, t] = 1.0 if d < 0 else 0.0
                ok["collision"][i, t] = True
                vals["ttc"][i, t] = min(_ttc(a, others), TTC_MAX)
                ok["ttc"][i, t] = True
            if map_model.drivable_region:
                d_edge = signed_distance_to_region((a.x, a.y), map_model.drivable_region)
                vals["dist_to_road_edge"][i, t] = d_edge
                ok["dist_to_road_edge"][i, t] = True
                vals["road_departure"][i, t] = 1.0 if d_edge < 0 else 0.0
                ok["road_departure"][i, t] = True

    ang_speed = np.zeros((A, T))
    for i in range(A):
        for t in range(1, T):
            if present[i, t] and present[i, t - 1]:
                ang_speed[i, t] = float(angle_diff(theta[i, t], theta[i, t - 1])) / FRAME_DT
                vals["angular_speed"][i, t] = ang_speed[i, t]
                ok["angular_speed"][i, t] = True
                vals["linear_accel"][i, t] = abs(speed[i, t] - speed[i, t - 1]) / FRAME_DT
                ok["linear_accel"][i, t] = True
        for t in range(2, T):
            if present[i, t] and present[i, t - 1] and present[i, t - 2]:
                vals["angular_accel"][i, t] = abs(ang_speed[i, t] - ang_speed[i, t - 1]) / FRAME_DT
                ok["angular_accel"][i, t] = True

    return FeatureTable(agent_ids=ids, values=vals, valid=ok,
                        times=np.array([f.time for f in frames]))
