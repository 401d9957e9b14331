"""Scripted multi-agent traffic on a generated map.

Vehicles follow lane paths under IDM with stop-line and blocker handling,
pedestrians traverse crosswalks gated by the light phase, lights run a fixed
two-phase cycle. Everything is a pure function of (map, counts, seed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import polyline_length, wrap_angle
from .idm import idm_accel
from .types import (
    AgentState, Frame, IdmParams, MapModel, ScenarioLog, TrafficLightState,
    FRAME_DT, MAX_AGENTS, PROMPT_TAGS, ValidationError,
)

SUBSTEPS = 5
SUB_DT = FRAME_DT / SUBSTEPS

GREEN_DWELL = 10.0
YELLOW_DWELL = 2.0

PED_SPEED = 1.3
LOOKAHEAD = 45.0
CORRIDOR = 1.7


def light_phase(arm: int, t: float, offset: float) -> str:
    """Two-phase cycle: arms 0/2 and 1/3 alternate green/yellow/red."""
    cycle = 2.0 * (GREEN_DWELL + YELLOW_DWELL)
    tau = (t + offset) % cycle
    group = arm % 2
    if group == 1:
        tau = (tau + GREEN_DWELL + YELLOW_DWELL) % cycle
    if tau < GREEN_DWELL:
        return "green"
    if tau < GREEN_DWELL + YELLOW_DWELL:
        return "yellow"
    return "red"


@dataclass
class _Path:
    approach: int
    lane_ids: list[int]
    points: np.ndarray
    length: float
    approach_len: float   # arclength where the approach lane ends (stop line)
    speed_limit: float
    cum: np.ndarray = field(default=None)  # cumulative arclength per vertex

    def __post_init__(self):
        if self.cum is None:
            seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
            self.cum = np.concatenate([[0.0], np.cumsum(seg)])


def _build_paths(map_model: MapModel) -> list[_Path]:
    """All approach->connector->exit paths, grouped by approach arm index."""
    paths = []
    # approach lanes are the even-index lanes by construction; recover them as
    # lanes that have successors and are not successors of anything.
    succ_of = {s for lane in map_model.lanes for s in lane.successors}
    approaches = [l for l in map_model.lanes if l.successors and l.lane_id not in succ_of]
    for arm, app in enumerate(approaches):
        for conn_id in app.successors:
            conn = map_model.lane_by_id(conn_id)
            for exit_id in conn.successors:
                ex = map_model.lane_by_id(exit_id)
                pts = [app.centerline]
                for nxt in (conn.centerline, ex.centerline):
                    pts.append(nxt[1:] if np.allclose(nxt[0], pts[-1][-1], atol=0.3) else nxt)
                points = np.concatenate(pts, axis=0)
                paths.append(_Path(
                    approach=arm,
                    lane_ids=[app.lane_id, conn_id, exit_id],
                    points=points,
                    length=polyline_length(points),
                    approach_len=polyline_length(app.centerline),
                    speed_limit=min(app.speed_limit, conn.speed_limit, ex.speed_limit),
                ))
    return paths


def _point_on(path: _Path, s: float):
    pts, cum = path.points, path.cum
    s = float(np.clip(s, 0.0, cum[-1]))
    i = int(np.searchsorted(cum, s, side="right") - 1)
    i = min(i, len(pts) - 2)
    seg = cum[i + 1] - cum[i]
    t = 0.0 if seg == 0.0 else (s - cum[i]) / seg
    p = pts[i] + t * (pts[i + 1] - pts[i])
    d = pts[i + 1] - pts[i]
    return float(p[0]), float(p[1]), float(math.atan2(d[1], d[0]))


@dataclass
class _Vehicle:
    agent_id: int
    agent_class: str
    path: _Path
    s: float
    v: float
    params: IdmParams
    w: float
    l: float
    spawn_frame: int = 0
    active: bool = True
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0


@dataclass
class _Ped:
    agent_id: int
    a: np.ndarray
    b: np.ndarray
    arm: int
    progress: float      # meters along a->b
    spawn_frame: int
    walking: bool = False
    done_at: float | None = None
    active: bool = True


def _derive_prompt(n_vehicles: int, n_pedestrians: int, n_cyclists: int) -> list[str]:
    tags = []
    total = n_vehicles + n_pedestrians
    tags.append("sparse" if total < 6 else ("dense" if total >= 14 else "medium"))
    if n_pedestrians >= 4:
        tags.append("pedestrian_heavy")
    elif n_pedestrians == 0:
        tags.append("vehicles_only")
    else:
        tags.append("pedestrian_light")
    if n_cyclists > 0:
        tags.append("cyclist_present")
    tags.append("intersection")
    return [t for t in tags if t in PROMPT_TAGS]


def script_scenario(map_model: MapModel, n_vehicles: int, n_pedestrians: int,
                    n_frames: int, seed: int) -> ScenarioLog:
    """Deterministic scripted log; vehicle id 0 is the ego on the map route."""
    if n_vehicles + n_pedestrians > MAX_AGENTS:
        raise ValidationError("agent counts exceed 128")
    if n_vehicles < 0 or n_pedestrians < 0 or n_frames < 1:
        raise ValidationError("counts and n_frames must be nonnegative / positive")
    if not map_model.route:
        raise ValidationError("map has no route")
    rng = np.random.default_rng(np.random.Philox(key=seed))
    paths = _build_paths(map_model)
    if not paths:
        raise ValidationError("map has no drivable paths")
    offset = float(rng.uniform(0.0, 24.0))

    route_path = next((p for p in paths if p.lane_ids == list(map_model.route)), paths[0])
    vehicles: list[_Vehicle] = []
    next_front: dict[int, float] = {}

    def spawn_vehicle(agent_id: int, path: _Path, cls: str, spawn_frame: int = 0):
        limit = path.speed_limit
        if cls == "cyclist":
            v0 = float(rng.uniform(3.5, 6.0))
            w, l = float(rng.uniform(0.7, 0.9)), float(rng.uniform(1.7, 2.1))
        else:
            v0 = limit * float(rng.uniform(0.7, 1.0))
            w, l = float(rng.uniform(1.8, 2.1)), float(rng.uniform(4.2, 5.0))
        params = IdmParams(v0=v0, T=float(rng.uniform(1.2, 2.0)),
                           a=float(rng.uniform(1.5, 2.4)), b=float(rng.uniform(2.0, 3.0)),
                           s0=2.0, delta=4.0)
        front = next_front.get(path.approach, path.approach_len - 12.0)
        s = front if spawn_frame == 0 else 2.0
        next_front[path.approach] = front - float(rng.uniform(14.0, 26.0))
        vehicles.append(_Vehicle(agent_id, cls, path, max(2.0, s),
                                 v0 * float(rng.uniform(0.5, 0.9)), params, w, l,
                                 spawn_frame=spawn_frame))

    # ego first, ~55 m before the stop line
    ego_params = IdmParams(v0=route_path.speed_limit * 0.9, T=1.5, a=2.0, b=3.0, s0=2.0, delta=4.0)
    ego = _Vehicle(0, "vehicle", route_path, max(2.0, route_path.approach_len - 55.0),
                   route_path.speed_limit * 0.6, ego_params, 2.0, 4.7)
    vehicles.append(ego)
    next_front[route_path.approach] = ego.s - float(rng.uniform(16.0, 26.0))

    agent_id = 1
    for i in range(n_vehicles - 1 if n_vehicles > 0 else 0):
        path = paths[int(rng.integers(0, len(paths)))]
        cls = "cyclist" if rng.random() < 0.15 else "vehicle"
        spawn_frame = int(rng.integers(2, max(3, n_frames // 2))) if rng.random() < 0.2 else 0
        spawn_vehicle(agent_id, path, cls, spawn_frame)
        agent_id += 1
    if n_vehicles == 0:
        vehicles.clear()

    peds: list[_Ped] = []
    for i in range(n_pedestrians if map_model.crosswalks else 0):
        cw_idx = int(rng.integers(0, len(map_model.crosswalks)))
        cw = map_model.crosswalks[cw_idx]
        a = (np.asarray(cw[0]) + np.asarray(cw[1])) / 2.0
        b = (np.asarray(cw[2]) + np.asarray(cw[3])) / 2.0
        if rng.random() < 0.5:
            a, b = b, a
        spawn_frame = int(rng.integers(0, max(1, n_frames // 2))) if rng.random() < 0.3 else 0
        # crosswalks are emitted one per arm in arm order
        peds.append(_Ped(agent_id, a, b, cw_idx % 4, 0.0, spawn_frame))
        agent_id += 1

    n_cyclists = sum(1 for v in vehicles if v.agent_class == "cyclist")
    prompt = _derive_prompt(len(vehicles), len(peds), n_cyclists)

    def vehicle_leader(me: _Vehicle, states: dict[int, tuple[float, float, float, float, float]]):
        """Return (gap, leader speed along my direction) or (inf, 0)."""
        best_gap, best_v = math.inf, 0.0
        mx, my_, mth, mv, _ = states[me.agent_id]
        cth, sth = math.cos(mth), math.sin(mth)
        for other in vehicles:
            if other.agent_id == me.agent_id or not other.active:
                continue
            same_path = other.path is me.path
            shared_app = (other.path.approach == me.path.approach
                          and me.s < me.path.approach_len and other.s < other.path.approach_len)
            if same_path or shared_app:
                ds = other.s - me.s
                if 0.05 < ds < LOOKAHEAD:
                    gap = ds - 0.5 * (me.l + other.l)
                    if gap < best_gap:
                        best_gap, best_v = gap, other.v
                    continue
            ox, oy, oth, ov, _ = states[other.agent_id]
            fwd = (ox - mx) * cth + (oy - my_) * sth
            lat = -(ox - mx) * sth + (oy - my_) * cth
            if 0.05 < fwd < LOOKAHEAD and abs(lat) < CORRIDOR:
                gap = fwd - 0.5 * (me.l + other.l)
                v_along = ov * math.cos(oth - mth)
                if gap < best_gap:
                    best_gap, best_v = gap, v_along
        for ped in peds:
            if not ped.active or ped.done_at is not None:
                continue
            px, py = _ped_pos(ped)
            fwd = (px - mx) * cth + (py - my_) * sth
            lat = -(px - mx) * sth + (py - my_) * cth
            if 0.05 < fwd < LOOKAHEAD and abs(lat) < CORRIDOR:
                gap = fwd - 0.5 * me.l - 0.4
                if gap < best_gap:
                    best_gap, best_v = gap, 0.0
        return max(best_gap, 0.11), best_v

    def _ped_pos(ped: _Ped):
        d = ped.b - ped.a
        n = float(np.linalg.norm(d))
        t = 0.0 if n == 0 else min(1.0, ped.progress / n)
        p = ped.a + t * d
        return float(p[0]), float(p[1])

    frames: list[Frame] = []
    xmin, ymin, xmax, ymax = map_model.extent
    for f in range(n_frames):
        t = f * FRAME_DT
        for v in vehicles:
            if v.spawn_frame == f and not v.active:
                # delay entry while the path start is occupied
                blocked = any(o.active and o.path.approach == v.path.approach
                              and abs(o.s - v.s) < 12.0 for o in vehicles if o is not v)
                if blocked:
                    v.spawn_frame = f + 1
                else:
                    v.active = True
            elif v.spawn_frame > f:
                v.active = False
            elif v.spawn_frame == 0 and f == 0:
                v.active = True
        for ped in peds:
            ped.active = ped.spawn_frame <= f and (ped.done_at is None or t < ped.done_at + 2.0)

        if f > 0:
            # integrate one frame in substeps
            for _ in range(SUBSTEPS):
                states = {}
                for v in vehicles:
                    x, y, th = _point_on(v.path, v.s)
                    states[v.agent_id] = (x, y, th, v.v, v.s)
                for v in vehicles:
                    if not v.active or v.spawn_frame >= f:
                        continue
                    gap, lead_v = vehicle_leader(v, states)
                    approach = v.v - lead_v
                    stop_s = v.path.approach_len
                    phase = light_phase(v.path.approach, t, offset)
                    if v.s < stop_s and phase in ("red", "yellow"):
                        d_stop = stop_s - v.s - 0.5 * v.l
                        # dilemma zone: run a yellow that would need hard braking
                        commit = (phase == "yellow"
                                  and v.v * v.v > 2.0 * 4.5 * max(d_stop, 0.01))
                        if d_stop < gap and not commit:
                            gap, approach = max(d_stop, 0.11), v.v
                    acc = idm_accel(v.v, v.params.v0, gap if gap > 0 else math.inf,
                                    approach, v.params)
                    v_new = max(0.0, v.v + acc * SUB_DT)
                    v.s += 0.5 * (v.v + v_new) * SUB_DT
                    v.v = v_new
                    if v.s >= v.path.length - 0.5:
                        v.active = False
                for ped in peds:
                    if not ped.active or ped.done_at is not None:
                        continue
                    span = float(np.linalg.norm(ped.b - ped.a))
                    started = ped.progress > 0.0
                    if started or light_phase(ped.arm, t, offset) == "red":
                        ped.walking = True
                        ped.progress += PED_SPEED * SUB_DT
                        if ped.progress >= span:
                            ped.done_at = t
                    else:
                        ped.walking = False

        agents: list[AgentState] = []
        for v in vehicles:
            if not v.active:
                continue
            x, y, th = _point_on(v.path, v.s)
            if not (xmin <= x <= xmax and ymin <= y <= ymax):
                v.active = False
                continue
            v.x, v.y, v.theta = x, y, th
            agents.append(AgentState(v.agent_id, v.agent_class, x, y, th,
                                     v.v * math.cos(th), v.v * math.sin(th), v.w, v.l))
        for ped in peds:
            if not ped.active:
                continue
            px, py = _ped_pos(ped)
            d = ped.b - ped.a
            th = float(wrap_angle(math.atan2(d[1], d[0])))
            speed = PED_SPEED if (ped.walking and ped.done_at is None) else 0.0
            agents.append(AgentState(ped.agent_id, "pedestrian", px, py, th,
                                     speed * math.cos(th), speed * math.sin(th), 0.6, 0.6))
        agents.sort(key=lambda a: a.agent_id)
        lights = [TrafficLightState(i, light_phase(_anchor_arm(i), t, offset))
                  for i in range(len(map_model.traffic_light_anchors))]
        frames.append(Frame(time=t, lights=lights, agents=agents))

    log = ScenarioLog(map=map_model, prompt=prompt, frames=frames, seed=seed)
    log.validate()
    return log


def _anchor_arm(anchor_index: int) -> int:
    # anchors are emitted one per approach arm, in arm order
    return anchor_index
