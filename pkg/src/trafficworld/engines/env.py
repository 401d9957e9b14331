"""RL environment whose transition is the learned world model.

Actions are (acceleration m/s^2, yaw rate rad/s), integrated over 0.5 s by a
unicycle model; the environment advances via partial-AR stepping with the
integrated ego state as the override. Observations are a fixed-layout
vector: 5 ego features + 8 neighbors x 7 + 10 route waypoints x 2 + 1 light
state = 82 entries, all normalized to roughly [-1, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import (obb_corners, obb_overlap, point_on_polyline,
                        project_to_polyline, signed_distance_to_region,
                        wrap_angle)
from ..synthworld.types import AgentState, Frame, MapModel, ScenarioLog, FRAME_DT
from ..metrics import RewardConfig, ScoreReport, rl_score
from ..rollout.engine import RolloutEngine, SimState

ACCEL_CAP = 5.0
YAW_RATE_CAP = 0.5
N_NEIGHBORS = 8
N_WAYPOINTS = 10
WAYPOINT_SPACING_M = 5.0
OBS_DIM = 5 + N_NEIGHBORS * 7 + N_WAYPOINTS * 2 + 1

LIGHT_CODE = {"green": 0.0, "yellow": 1.0, "red": 2.0, "unknown": 3.0}


@dataclass
class EnvConfig:
    horizon_s: float = 8.0
    reward: RewardConfig = field(default_factory=RewardConfig)


@dataclass
class EnvState:
    sim: SimState
    scenario: ScenarioLog
    step_count: int = 0
    done: bool = False
    done_reason: str | None = None
    episode_seed: int = 0
    progress_sum: float = 0.0
    last_route_s: float = 0.0
    start_frame: int = 0


class WorldEnv:
    def __init__(self, engine: RolloutEngine, scenarios: list[ScenarioLog],
                 cfg: EnvConfig | None = None):
        if not scenarios:
            raise ValueError("empty scenario source")
        self.engine = engine
        self.scenarios = scenarios
        self.cfg = cfg or EnvConfig()
        self.horizon_steps = int(round(self.cfg.horizon_s / FRAME_DT))

    # -- observation -----------------------------------------------------
    def observe(self, state: EnvState) -> np.ndarray:
        fr = state.sim.frames[-1]
        m = state.sim.map
        ego = fr.agent_by_id(0)
        obs = np.zeros(OBS_DIM)
        if ego is None or not ego.valid:
            return obs
        route = m.route_polyline()
        s, lateral, heading = project_to_polyline(route, (ego.x, ego.y))
        c, sn = math.cos(ego.theta), math.sin(ego.theta)
        v_lon = ego.v_x * c + ego.v_y * sn
        v_lat = -ego.v_x * sn + ego.v_y * c
        err = float(wrap_angle(heading - ego.theta))
        obs[0:5] = (v_lon / 25.0, v_lat / 25.0, math.cos(err), math.sin(err),
                    lateral / 5.0)
        others = [a for a in fr.valid_agents() if a.agent_id != 0]
        others.sort(key=lambda a: (a.x - ego.x) ** 2 + (a.y - ego.y) ** 2)
        for j, o in enumerate(others[:N_NEIGHBORS]):
            dx, dy = o.x - ego.x, o.y - ego.y
            rx = dx * c + dy * sn
            ry = -dx * sn + dy * c
            base = 5 + 7 * j
            obs[base: base + 7] = (
                rx / 50.0, ry / 50.0, float(wrap_angle(o.theta - ego.theta)) / math.pi,
                (o.v_x - ego.v_x) / 25.0, (o.v_y - ego.v_y) / 25.0,
                o.w / 5.0, o.l / 15.0)
        base = 5 + 7 * N_NEIGHBORS
        for j in range(N_WAYPOINTS):
            wx, wy, _ = point_on_polyline(route, s + (j + 1) * WAYPOINT_SPACING_M)
            dx, dy = wx - ego.x, wy - ego.y
            obs[base + 2 * j] = (dx * c + dy * sn) / 50.0
            obs[base + 2 * j + 1] = (-dx * sn + dy * c) / 50.0
        light = 3.0
        if fr.lights:
            # the anchor nearest the route ahead of the ego
            best = min(fr.lights,
                       key=lambda lt: abs(project_to_polyline(
                           route, m.traffic_light_anchors[lt.anchor][:2])[0] - s))
            light = LIGHT_CODE[best.state]
        obs[-1] = light / 3.0
        return obs

    # -- reset / step ------------------------------------------------------
    def reset(self, seed: int) -> tuple[EnvState, np.ndarray]:
        rng = np.random.default_rng(np.random.Philox(key=seed))
        log = self.scenarios[int(rng.integers(0, len(self.scenarios)))]
        cl = self.engine.cl
        sim = self.engine.make_state(log.map, log.frames[:cl], seed=seed)
        state = EnvState(sim=sim, scenario=log, episode_seed=seed,
                         start_frame=cl - 1)
        ego = sim.frames[-1].agent_by_id(0)
        route = log.map.route_polyline()
        state.last_route_s = project_to_polyline(route, (ego.x, ego.y))[0] \
            if ego else 0.0
        return state, self.observe(state)

    def integrate_ego(self, ego: AgentState, accel: float, yaw_rate: float
                      ) -> AgentState:
        """Unicycle over FRAME_DT with midpoint heading."""
        a = max(-ACCEL_CAP, min(ACCEL_CAP, float(accel)))
        w = max(-YAW_RATE_CAP, min(YAW_RATE_CAP, float(yaw_rate)))
        v = ego.speed()
        v_new = max(0.0, v + a * FRAME_DT)
        dist = v * FRAME_DT + 0.5 * a * FRAME_DT * FRAME_DT
        dist = max(0.0, dist)
        th_mid = ego.theta + 0.5 * w * FRAME_DT
        th_new = float(wrap_angle(ego.theta + w * FRAME_DT))
        x = ego.x + dist * math.cos(th_mid)
        y = ego.y + dist * math.sin(th_mid)
        return AgentState(0, "vehicle", x, y, th_new,
                          v_new * math.cos(th_new), v_new * math.sin(th_new),
                          ego.w, ego.l)

    def step(self, state: EnvState, action) -> tuple[EnvState, np.ndarray, float, bool]:
        if state.done:
            raise RuntimeError("cannot act on a done episode")
        ego = state.sim.frames[-1].agent_by_id(0)
        if ego is None:
            raise RuntimeError("ego vanished from the environment")
        new_ego = self.integrate_ego(ego, action[0], action[1])
        frame = self.engine.step_partial_ar(state.sim, ego_override=new_ego)
        state.step_count += 1

        m = state.sim.map
        route = m.route_polyline()
        s_now = project_to_polyline(route, (new_ego.x, new_ego.y))[0]
        delta = s_now - state.last_route_s
        state.last_route_s = s_now
        state.progress_sum += delta
        reward = delta / self.cfg.reward.rl_progress_norm_m

        collided = any(
            o.agent_id != 0 and obb_overlap(new_ego.box(), o.box())
            for o in frame.valid_agents()
            if abs(o.x - new_ego.x) + abs(o.y - new_ego.y) < 25.0)
        off_road = False
        if m.drivable_region:
            off_road = any(
                signed_distance_to_region(cr, m.drivable_region) < 0.0
                for cr in obb_corners(new_ego.x, new_ego.y, new_ego.theta,
                                      new_ego.w, new_ego.l))
        if collided or off_road:
            reward -= 1.0
            state.done = True
            state.done_reason = "collision" if collided else "off-drivable"
        elif state.step_count >= self.horizon_steps:
            state.done = True
            state.done_reason = "horizon"
        return state, self.observe(state), float(reward), state.done

    def episode_score(self, state: EnvState) -> ScoreReport:
        frames = state.sim.frames[state.start_frame:]
        return rl_score(frames, state.sim.map, self.cfg.reward)
