"""Rollout post-processing: sliding-window smoothing and 10 Hz interpolation."""
from __future__ import annotations

import math

import numpy as np

from ..geometry import circular_mean, wrap_angle
from ..synthworld.types import AgentState, Frame, TrafficLightState, FRAME_DT

TARGET_DT = 0.1


def smooth_traj(poses: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average over (N, 3) poses with shrinking edge windows;
    headings via circular mean. window must be odd and >= 1."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    poses = np.asarray(poses, dtype=float)
    if window == 1:
        return poses.copy()
    h = window // 2
    out = np.empty_like(poses)
    n = len(poses)
    for i in range(n):
        lo, hi = max(0, i - h), min(n, i + h + 1)
        out[i, 0] = poses[lo:hi, 0].mean()
        out[i, 1] = poses[lo:hi, 1].mean()
        out[i, 2] = circular_mean(poses[lo:hi, 2])
    return out


def _lerp_agent(a: AgentState, b: AgentState, u: float) -> AgentState:
    th = float(wrap_angle(a.theta + u * float(wrap_angle(b.theta - a.theta))))
    return AgentState(
        a.agent_id, a.agent_class,
        a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), th,
        a.v_x + u * (b.v_x - a.v_x), a.v_y + u * (b.v_y - a.v_y),
        a.w, a.l, True,
    )


def interpolate_10hz(frames: list[Frame]) -> list[Frame]:
    """Linear positions/velocities, shortest-arc headings; the original 2 Hz
    samples are preserved bit-exactly."""
    if len(frames) < 2:
        raise ValueError("need at least two frames to interpolate")
    steps = int(round(FRAME_DT / TARGET_DT))
    out: list[Frame] = []
    for f0, f1 in zip(frames, frames[1:]):
        out.append(f0)
        ids0 = {a.agent_id: a for a in f0.valid_agents()}
        ids1 = {a.agent_id: a for a in f1.valid_agents()}
        both = sorted(set(ids0) & set(ids1))
        for k in range(1, steps):
            u = k / steps
            agents = [_lerp_agent(ids0[i], ids1[i], u) for i in both]
            lights = [TrafficLightState(lt.anchor, lt.state) for lt in f0.lights]
            out.append(Frame(time=f0.time + k * TARGET_DT, lights=lights, agents=agents))
    out.append(frames[-1])
    return out
