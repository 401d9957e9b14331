"""Core domain types: map, agents, frames, scenario logs.

Units: meters, seconds, radians, m/s. Frames are sampled at 2 Hz
(FRAME_DT = 0.5 s). Headings are wrapped to [-pi, pi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import polyline_length, wrap_angle

FRAME_DT = 0.5
MAX_AGENTS = 128

AGENT_CLASSES = ("vehicle", "pedestrian", "cyclist")
LIGHT_STATES = ("green", "yellow", "red", "unknown")

# Closed prompt vocabulary (12 tags, matching the prompt-token range).
PROMPT_TAGS = (
    "sparse", "medium", "dense",
    "pedestrian_heavy", "pedestrian_light", "vehicles_only",
    "cyclist_present", "intersection", "calm", "rush",
    "mixed", "straight_road",
)


class ValidationError(ValueError):
    """Raised when a domain object violates its invariants."""


@dataclass
class Lane:
    lane_id: int
    centerline: np.ndarray        # (N, 2)
    width: float
    speed_limit: float
    successors: list[int] = field(default_factory=list)

    def directions(self) -> np.ndarray:
        """Unit tangent per segment, (N-1, 2)."""
        d = np.diff(self.centerline, axis=0)
        n = np.linalg.norm(d, axis=1, keepdims=True)
        return d / np.maximum(n, 1e-12)

    def length(self) -> float:
        return polyline_length(self.centerline)

    def validate(self, extent) -> None:
        if self.width <= 0:
            raise ValidationError(f"lane {self.lane_id}: width must be > 0")
        if self.speed_limit <= 0:
            raise ValidationError(f"lane {self.lane_id}: speed limit must be > 0")
        xmin, ymin, xmax, ymax = extent
        pts = self.centerline
        if (pts[:, 0] < xmin - 1e-6).any() or (pts[:, 0] > xmax + 1e-6).any() \
                or (pts[:, 1] < ymin - 1e-6).any() or (pts[:, 1] > ymax + 1e-6).any():
            raise ValidationError(f"lane {self.lane_id}: point outside extent")


@dataclass
class MapModel:
    lanes: list[Lane]
    drivable_region: list[np.ndarray]              # polygons (N, 2)
    crosswalks: list[np.ndarray]                   # polygons (N, 2)
    traffic_light_anchors: list[tuple[float, float, float]]  # (x, y, theta)
    route: list[int]                               # ordered lane ids for the ego
    extent: tuple[float, float, float, float]      # xmin, ymin, xmax, ymax

    def lane_by_id(self, lane_id: int) -> Lane:
        for lane in self.lanes:
            if lane.lane_id == lane_id:
                return lane
        raise KeyError(lane_id)

    def route_polyline(self) -> np.ndarray:
        pts = [self.lane_by_id(i).centerline for i in self.route]
        out = [pts[0]]
        for p in pts[1:]:
            # drop duplicated joint vertex
            out.append(p[1:] if np.allclose(p[0], out[-1][-1]) else p)
        return np.concatenate(out, axis=0)

    def validate(self) -> None:
        ids = {lane.lane_id for lane in self.lanes}
        for lane in self.lanes:
            lane.validate(self.extent)
        for rid in self.route:
            if rid not in ids:
                raise ValidationError(f"route lane {rid} does not exist")

    def to_dict(self) -> dict:
        return {
            "lanes": [
                {
                    "id": lane.lane_id,
                    "centerline": np.asarray(lane.centerline, dtype=float).tolist(),
                    "width": lane.width,
                    "speed_limit": lane.speed_limit,
                    "successors": list(lane.successors),
                }
                for lane in self.lanes
            ],
            "drivable_region": [np.asarray(p, dtype=float).tolist() for p in self.drivable_region],
            "crosswalks": [np.asarray(p, dtype=float).tolist() for p in self.crosswalks],
            "traffic_light_anchors": [list(a) for a in self.traffic_light_anchors],
            "route": list(self.route),
            "extent": list(self.extent),
        }

    @staticmethod
    def from_dict(d: dict) -> "MapModel":
        lanes = [
            Lane(
                lane_id=int(x["id"]),
                centerline=np.asarray(x["centerline"], dtype=float),
                width=float(x["width"]),
                speed_limit=float(x["speed_limit"]),
                successors=[int(s) for s in x["successors"]],
            )
            for x in d["lanes"]
        ]
        return MapModel(
            lanes=lanes,
            drivable_region=[np.asarray(p, dtype=float) for p in d["drivable_region"]],
            crosswalks=[np.asarray(p, dtype=float) for p in d["crosswalks"]],
            traffic_light_anchors=[tuple(float(v) for v in a) for a in d["traffic_light_anchors"]],
            route=[int(r) for r in d["route"]],
            extent=tuple(float(v) for v in d["extent"]),
        )

    def transformed(self, rotation: float = 0.0, translation=(0.0, 0.0)) -> "MapModel":
        """Rigidly transformed copy (rotate about the origin, then translate)."""
        c, s = math.cos(rotation), math.sin(rotation)
        rot = np.array([[c, -s], [s, c]])
        t = np.asarray(translation, dtype=float)

        def tp(pts):
            return np.asarray(pts, dtype=float) @ rot.T + t

        lanes = [Lane(l.lane_id, tp(l.centerline), l.width, l.speed_limit, list(l.successors))
                 for l in self.lanes]
        anchors = [(float(v[0]), float(v[1]), float(wrap_angle(a[2])))
                   for a, v in ((a, tp(np.array([a[:2]]))[0]) for a in
                                ((ax, ay, th + rotation) for ax, ay, th in self.traffic_light_anchors))]
        all_pts = np.concatenate([l.centerline for l in lanes] +
                                 [tp(p) for p in self.drivable_region]) if lanes else np.zeros((1, 2))
        extent = (float(all_pts[:, 0].min()), float(all_pts[:, 1].min()),
                  float(all_pts[:, 0].max()), float(all_pts[:, 1].max()))
        return MapModel(
            lanes=lanes,
            drivable_region=[tp(p) for p in self.drivable_region],
            crosswalks=[tp(p) for p in self.crosswalks],
            traffic_light_anchors=anchors,
            route=list(self.route),
            extent=extent,
        )


@dataclass
class AgentState:
    agent_id: int
    agent_class: str            # vehicle | pedestrian | cyclist
    x: float
    y: float
    theta: float                # [-pi, pi)
    v_x: float                  # world frame, m/s
    v_y: float
    w: float
    l: float
    valid: bool = True

    def __post_init__(self):
        # wrap only when out of range so in-range values round-trip bit-exactly
        if not (-math.pi <= self.theta < math.pi):
            self.theta = float(wrap_angle(self.theta))

    def speed(self) -> float:
        return math.hypot(self.v_x, self.v_y)

    def box(self):
        return (self.x, self.y, self.theta, self.w, self.l)

    def validate(self) -> None:
        if not 0 <= self.agent_id < MAX_AGENTS:
            raise ValidationError(f"agent id {self.agent_id} out of [0, {MAX_AGENTS})")
        if self.agent_class not in AGENT_CLASSES:
            raise ValidationError(f"unknown agent class {self.agent_class!r}")
        if self.valid and (self.w <= 0 or self.l <= 0):
            raise ValidationError(f"agent {self.agent_id}: nonpositive size")


@dataclass
class TrafficLightState:
    anchor: int
    state: str                  # green | yellow | red | unknown

    def validate(self, n_anchors: int) -> None:
        if not 0 <= self.anchor < n_anchors:
            raise ValidationError(f"light anchor {self.anchor} out of range")
        if self.state not in LIGHT_STATES:
            raise ValidationError(f"unknown light state {self.state!r}")


@dataclass
class Frame:
    time: float
    lights: list[TrafficLightState]
    agents: list[AgentState]

    def agent_by_id(self, agent_id: int) -> AgentState | None:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        return None

    def valid_agents(self) -> list[AgentState]:
        return [a for a in self.agents if a.valid]

    def validate(self, n_anchors: int | None = None) -> None:
        if len(self.agents) > MAX_AGENTS:
            raise ValidationError(f"frame at t={self.time}: {len(self.agents)} agents > {MAX_AGENTS}")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"frame at t={self.time}: duplicate agent ids")
        if ids != sorted(ids):
            raise ValidationError(f"frame at t={self.time}: agents not sorted by id")
        for a in self.agents:
            a.validate()
        if n_anchors is not None:
            for lt in self.lights:
                lt.validate(n_anchors)


@dataclass
class ScenarioLog:
    map: MapModel
    prompt: list[str]
    frames: list[Frame]
    seed: int

    def validate(self) -> None:
        self.map.validate()
        for tag in self.prompt:
            if tag not in PROMPT_TAGS:
                raise ValidationError(f"unknown prompt tag {tag!r}")
        n_anchors = len(self.map.traffic_light_anchors)
        prev_t = None
        for fr in self.frames:
            fr.validate(n_anchors)
            if prev_t is not None and not math.isclose(fr.time - prev_t, FRAME_DT, abs_tol=1e-9):
                raise ValidationError(f"frame times must increase by {FRAME_DT}s, got {prev_t} -> {fr.time}")
            prev_t = fr.time
        if self.frames and self.frames[0].agents:
            ego = self.frames[0].agent_by_id(0)
            if ego is None or not ego.valid:
                raise ValidationError("ego (id 0) must be valid in frame 0")

    def transformed(self, rotation: float = 0.0, translation=(0.0, 0.0)) -> "ScenarioLog":
        """Rigid transform applied jointly to map and all agent states."""
        c, s = math.cos(rotation), math.sin(rotation)
        new_map = self.map.transformed(rotation, translation)
        frames = []
        for fr in self.frames:
            agents = []
            for a in fr.agents:
                x = float(c * a.x - s * a.y + translation[0])
                y = float(s * a.x + c * a.y + translation[1])
                vx = float(c * a.v_x - s * a.v_y)
                vy = float(s * a.v_x + c * a.v_y)
                agents.append(AgentState(a.agent_id, a.agent_class, x, y,
                                         a.theta + rotation,
                                         vx, vy, a.w, a.l, a.valid))
            frames.append(Frame(fr.time, [TrafficLightState(lt.anchor, lt.state) for lt in fr.lights], agents))
        return ScenarioLog(map=new_map, prompt=list(self.prompt), frames=frames, seed=self.seed)


@dataclass
class IdmParams:
    """Car-following parameters: desired speed v0, headway T, max accel a,
    comfortable decel b, jam distance s0, exponent delta."""
    v0: float = 13.9
    T: float = 1.5
    a: float = 2.0
    b: float = 3.0
    s0: float = 2.0
    delta: float = 4.0

    def validate(self) -> None:
        for name in ("v0", "T", "a", "b", "s0", "delta"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"IdmParams.{name} must be positive")
