"""Seeded synthetic map generator.

Produces a four-arm signalized intersection: one lane per direction per arm,
straight-through and right-turn connectors, crosswalks near the junction and
one traffic light anchor per approach. The whole map may be rotated per seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import Lane, MapModel, ValidationError

POINT_SPACING = 4.0


@dataclass
class MapSpec:
    n_arms: int = 4
    arm_length: float = 150.0
    lane_width: float = 3.5
    speed_limit: float = 13.9       # base; jittered per seed
    intersection_half: float = 8.0  # half-size of the junction box
    rotate: bool = True

    def validate(self) -> None:
        if self.n_arms not in (3, 4):
            raise ValidationError("n_arms must be 3 or 4")
        if self.arm_length < 60.0:
            raise ValidationError("arm_length must be >= 60 m")
        if self.lane_width <= 0 or self.speed_limit <= 0:
            raise ValidationError("lane_width and speed_limit must be positive")


def _sample_line(p0, p1) -> np.ndarray:
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    n = max(2, int(np.linalg.norm(p1 - p0) / POINT_SPACING) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return p0 + t * (p1 - p0)


def _sample_arc(center, radius, a0, a1) -> np.ndarray:
    n = max(4, int(abs(a1 - a0) * radius / POINT_SPACING) + 1)
    ang = np.linspace(a0, a1, n)
    return np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)


def generate_map(seed: int, spec: MapSpec | None = None) -> MapModel:
    """Deterministic map for a seed; raises ValidationError on infeasible spec."""
    spec = spec or MapSpec()
    spec.validate()
    rng = np.random.default_rng(np.random.Philox(key=seed))

    half = spec.intersection_half
    lw = spec.lane_width
    off = lw / 2.0
    arm = spec.arm_length * float(rng.uniform(0.9, 1.1))
    limit = spec.speed_limit * float(rng.uniform(0.85, 1.15))

    # Arm directions: 0=east, 1=north, 2=west, 3=south (approach direction of travel).
    dirs = [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
            np.array([-1.0, 0.0]), np.array([0.0, -1.0])][: spec.n_arms]

    lanes: list[Lane] = []
    lane_id = 0
    approach_of = {}
    exit_of = {}
    for k, d in enumerate(dirs):
        left = np.array([-d[1], d[0]])
        # approach lane: from the far end toward the junction, right of centerline
        a0 = -d * arm - left * off
        a1 = -d * half - left * off
        lanes.append(Lane(lane_id, _sample_line(a0, a1), lw, limit))
        approach_of[k] = lane_id
        lane_id += 1
        # exit lane: from the junction outward, on the same side of travel
        e0 = d * half - left * off
        e1 = d * arm - left * off
        lanes.append(Lane(lane_id, _sample_line(e0, e1), lw, limit))
        exit_of[k] = lane_id
        lane_id += 1

    n = len(dirs)
    for k, d in enumerate(dirs):
        left = np.array([-d[1], d[0]])
        start = -d * half - left * off
        # straight connector
        through = _sample_line(start, d * half - left * off)
        lanes.append(Lane(lane_id, through, lw, limit))
        lanes[approach_of[k] ].successors.append(lane_id)
        lanes[lane_id].successors.append(exit_of[k])
        lane_id += 1
        # right-turn connector (clockwise quarter arc); 4-arm junctions only
        if n == 4:
            kr = (k - 1) % n
            radius = half - off
            center = -d * half - left * half
            a_in = math.atan2(left[1], left[0])
            arc = _sample_arc(center, radius, a_in, a_in - math.pi / 2.0)
            lanes.append(Lane(lane_id, arc, lw, limit))
            lanes[approach_of[k]].successors.append(lane_id)
            lanes[lane_id].successors.append(exit_of[kr])
            lane_id += 1

    # Route: ego drives the east-bound approach straight through.
    through_id = lanes[approach_of[0]].successors[0]
    route = [approach_of[0], through_id, exit_of[0]]

    # Drivable region: one rectangle per arm plus the junction box.
    road_half = lw * 1.25
    polys = [np.array([[-half - 0.5, -half - 0.5], [half + 0.5, -half - 0.5],
                       [half + 0.5, half + 0.5], [-half - 0.5, half + 0.5]])]
    for d in dirs:
        left = np.array([-d[1], d[0]])
        a, b = d * half, d * (arm + 2.0)
        polys.append(np.array([a + left * road_half, b + left * road_half,
                               b - left * road_half, a - left * road_half]))
        a, b = -d * half, -d * (arm + 2.0)
        polys.append(np.array([a + left * road_half, b + left * road_half,
                               b - left * road_half, a - left * road_half]))

    # Crosswalks: a band across each arm just outside the junction box.
    crosswalks = []
    for d in dirs:
        left = np.array([-d[1], d[0]])
        near, far = half + 1.5, half + 4.5
        crosswalks.append(np.array([
            d * near + left * road_half, d * far + left * road_half,
            d * far - left * road_half, d * near - left * road_half,
        ]))

    # One light anchor per approach, at the stop line, facing the approach flow.
    anchors = []
    for k, d in enumerate(dirs):
        left = np.array([-d[1], d[0]])
        pos = -d * (half + 0.5) - left * off
        anchors.append((float(pos[0]), float(pos[1]), float(math.atan2(d[1], d[0]))))

    pts = np.concatenate([l.centerline for l in lanes] + polys)
    extent = (float(pts[:, 0].min()) - 1.0, float(pts[:, 1].min()) - 1.0,
              float(pts[:, 0].max()) + 1.0, float(pts[:, 1].max()) + 1.0)

    m = MapModel(lanes=lanes, drivable_region=polys, crosswalks=crosswalks,
                 traffic_light_anchors=anchors, route=route, extent=extent)
    if spec.rotate:
        m = m.transformed(rotation=float(rng.uniform(-math.pi, math.pi)))
    m.validate()
    return m
