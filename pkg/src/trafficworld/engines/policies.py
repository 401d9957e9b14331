"""Driving policies: rule-based IDM variants and the model-imitation policy.

A policy maps (recent frames, map) to the ego state Delta-t ahead. IDM
policies track the route centerline laterally and apply IDM longitudinally
against the nearest leading agent in the route corridor; they ignore lights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import circular_mean, point_on_polyline, project_to_polyline
from ..synthworld.idm import idm_accel
from ..synthworld.types import AgentState, Frame, IdmParams, MapModel, FRAME_DT
from ..tokenizer import KIND_KEY
from ..rollout.engine import RolloutEngine
from ..rollout.sampler import sample_token

ACCEL_CAP = 5.0
YAW_RATE_CAP = 0.5
CORRIDOR_M = 1.8

V0_FRACTIONS = (0.6, 0.8, 1.0)
HEADWAYS = (0.8, 1.2, 1.6, 2.0, 2.4)


def route_speed_limit(map_model: MapModel) -> float:
    return min(map_model.lane_by_id(i).speed_limit for i in map_model.route)


@dataclass
class IdmPolicy:
    name: str
    v0_fraction: float
    headway: float
    accel: float = 1.8
    decel: float = 2.5
    max_brake: float = 4.0

    def act(self, frames: list[Frame], map_model: MapModel) -> AgentState:
        ego = frames[-1].agent_by_id(0)
        if ego is None:
            raise RuntimeError("no ego in the current frame")
        route = map_model.route_polyline()
        s, _, _ = project_to_polyline(route, (ego.x, ego.y))
        v = ego.speed()
        limit = route_speed_limit(map_model)
        v0 = max(0.5, self.v0_fraction * limit)

        gap, lead_v = math.inf, 0.0
        for o in frames[-1].valid_agents():
            if o.agent_id == 0:
                continue
            so, lat, heading = project_to_polyline(route, (o.x, o.y))
            if abs(lat) > CORRIDOR_M:
                continue
            ds = so - s
            if 0.1 < ds < 60.0:
                g = ds - 0.5 * (ego.l + o.l)
                if g < gap:
                    gap = max(g, 0.11)
                    lead_v = o.v_x * math.cos(heading) + o.v_y * math.sin(heading)
        params = IdmParams(v0=v0, T=self.headway, a=self.accel, b=self.decel,
                           s0=2.0, delta=4.0)
        acc = idm_accel(v, v0, gap, v - lead_v, params, max_brake=self.max_brake)
        acc = max(-ACCEL_CAP, min(ACCEL_CAP, acc))
        v_new = max(0.0, v + acc * FRAME_DT)
        s_new = s + 0.5 * (v + v_new) * FRAME_DT
        x, y, th = point_on_polyline(route, s_new)
        return AgentState(0, "vehicle", x, y, th,
                          v_new * math.cos(th), v_new * math.sin(th),
                          ego.w, ego.l)


def idm_policy_set(v0_fractions=V0_FRACTIONS, headways=HEADWAYS) -> list[IdmPolicy]:
    """The 15-policy grid: v0 fraction x headway."""
    grid = [(f, T) for f in v0_fractions for T in headways]
    if len(grid) != 15:
        raise ValueError(f"policy grid must have 15 combinations, got {len(grid)}")
    return [IdmPolicy(name=f"idm_v{f:g}_T{T:g}", v0_fraction=f, headway=T)
            for f, T in grid]


@dataclass
class ImitationPolicy:
    """Ego next state predicted by the world model, averaged over N samples."""
    engine: RolloutEngine
    n_samples: int = 4
    seed: int = 0
    name: str = "imitation"
    warn_untrained: bool = False

    def act(self, frames: list[Frame], map_model: MapModel) -> AgentState:
        eng = self.engine
        ego = frames[-1].agent_by_id(0)
        if ego is None:
            raise RuntimeError("no ego in the current frame")
        state = eng.make_state(map_model, frames, seed=self.seed)
        # per-call stream: deterministic in (seed, episode position)
        state.rng = np.random.default_rng(
            np.random.Philox(key=(self.seed * 65_537 + len(frames))))
        events, (cx, cy) = eng._window_events(state)
        h = eng._forward(events, state)
        fi_last = state.next_frame_index - 1
        pos = [i for i, e in enumerate(events)
               if e.kind == KIND_KEY and not e.is_light
               and e.frame_index == fi_last and e.obj == 0]
        if not pos:
            return ego
        chunks = eng._decode_tracked(h[pos].repeat(self.n_samples, 1), state)
        step = 1 if eng.H >= 2 else 0
        xs = [c["poses"][step][0] + cx for c in chunks]
        ys = [c["poses"][step][1] + cy for c in chunks]
        ths = [c["poses"][step][2] for c in chunks]
        x, y = float(np.mean(xs)), float(np.mean(ys))
        th = circular_mean(ths)
        if eng.H >= 2:
            vx = float(np.mean([(c["poses"][1][0] - c["poses"][0][0]) / FRAME_DT
                                for c in chunks]))
            vy = float(np.mean([(c["poses"][1][1] - c["poses"][0][1]) / FRAME_DT
                                for c in chunks]))
        else:
            vx, vy = ego.v_x, ego.v_y
        return AgentState(0, "vehicle", x, y, th, vx, vy, ego.w, ego.l)
