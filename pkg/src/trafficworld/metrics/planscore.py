"""Planning scores: gated/weighted driving score, RL episode score, value
estimation over rollouts.

score = prod(gates) * sum(w_n * phi_n) / sum(w_n). Any gate failure (at-fault
collision with a vehicle/VRU, multiple at-fault collisions, drivable-area
violation beyond the tolerance, driving against the flow beyond 6 m, progress
ratio below the minimum) forces zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import (obb_corners, obb_overlap, project_to_polyline,
                        signed_distance_to_region, wrap_angle)
from ..synthworld.types import Frame, MapModel, ScenarioLog, FRAME_DT
from .features import _ttc

VRU_CLASSES = ("pedestrian", "cyclist")


@dataclass
class ComfortThresholds:
    lat_accel: float = 4.89          # m/s^2, absolute
    lon_accel_max: float = 2.40      # m/s^2
    lon_accel_min: float = -4.05     # m/s^2
    yaw_rate: float = 0.95           # rad/s, absolute
    yaw_accel: float = 1.93          # rad/s^2, absolute
    lon_jerk: float = 4.13           # m/s^3, absolute
    jerk: float = 8.37               # m/s^3, magnitude


@dataclass
class RewardConfig:
    max_violation_m: float = 0.3             # drivable-area tolerance (gated score)
    oncoming_half_score_m: float = 2.0
    oncoming_gate_m: float = 6.0
    min_progress_ratio: float = 0.2
    weights: dict[str, float] = field(default_factory=lambda: {
        "driving_direction": 5.0, "ttc": 5.0, "speed_limit": 4.0,
        "progress": 5.0, "comfort": 2.0})
    comfort: ComfortThresholds = field(default_factory=ComfortThresholds)
    ttc_bound_s: float = 0.95
    speed_tolerance: float = 2.23             # m/s scale for overspeed penalty
    gamma_disc: float = 1.0
    rl_progress_norm_m: float = 62.0


@dataclass
class ScoreReport:
    metrics: dict[str, float]
    composite: float
    breakdown: dict = field(default_factory=dict)
    config_hash: str = ""

    def to_tsv(self) -> str:
        lines = [f"composite\t{self.composite:.6f}"]
        for k in sorted(self.metrics):
            lines.append(f"{k}\t{self.metrics[k]:.6f}")
        return "\n".join(lines) + "\n"


def _ego_series(frames: list[Frame]):
    rows = []
    for fr in frames:
        a = fr.agent_by_id(0)
        if a is not None and a.valid:
            rows.append(a)
    return rows


def _collisions(frames: list[Frame]):
    """(step, other agent, ego) tuples for frames where ego's box overlaps."""
    out = []
    for t, fr in enumerate(frames):
        ego = fr.agent_by_id(0)
        if ego is None or not ego.valid:
            continue
        for o in fr.valid_agents():
            if o.agent_id == 0:
                continue
            if abs(o.x - ego.x) + abs(o.y - ego.y) > 25.0:
                continue
            if obb_overlap(ego.box(), o.box()):
                out.append((t, o, ego))
    return out


def _at_fault(ego, other) -> bool:
    """Ego at fault when moving and striking; being struck while stopped is not."""
    if ego.speed() < 0.05:
        return False
    bearing = math.atan2(other.y - ego.y, other.x - ego.x)
    return abs(float(wrap_angle(bearing - ego.theta))) < math.radians(100.0)


def _route_progress(frames: list[Frame], map_model: MapModel) -> float:
    """Signed arclength progressed along the route polyline by the ego."""
    route = map_model.route_polyline()
    egos = _ego_series(frames)
    if len(egos) < 2:
        return 0.0
    s0, _, _ = project_to_polyline(route, (egos[0].x, egos[0].y))
    s1, _, _ = project_to_polyline(route, (egos[-1].x, egos[-1].y))
    return s1 - s0


def _direction_compliance(frames: list[Frame], map_model: MapModel,
                          cfg: RewardConfig) -> tuple[float, float]:
    """(phi score in {0, 0.5, 1}, worst 1-second against-flow movement in m)."""
    route = map_model.route_polyline()
    egos = _ego_series(frames)
    if len(egos) < 2:
        return 1.0, 0.0
    progress = []
    for a, b in zip(egos, egos[1:]):
        _, _, heading = project_to_polyline(route, (a.x, a.y))
        d = (b.x - a.x) * math.cos(heading) + (b.y - a.y) * math.sin(heading)
        progress.append(d)
    window = max(1, int(round(1.0 / FRAME_DT)))
    worst = 0.0
    for i in range(len(progress)):
        seg = sum(progress[i: i + window])
        worst = min(worst, seg)
    against = -worst
    if against > cfg.oncoming_gate_m:
        return 0.0, against
    if against > cfg.oncoming_half_score_m:
        return 0.5, against
    return 1.0, against


def _speed_limit_score(frames: list[Frame], map_model: MapModel,
                       cfg: RewardConfig) -> float:
    if not map_model.lanes:
        return 1.0
    violations = []
    for fr in frames:
        ego = fr.agent_by_id(0)
        if ego is None or not ego.valid:
            continue
        best_lane, best_d = None, math.inf
        for lane in map_model.lanes:
            _, lateral, _ = project_to_polyline(lane.centerline, (ego.x, ego.y))
            if abs(lateral) < best_d:
                best_d, best_lane = abs(lateral), lane
        violations.append(max(0.0, ego.speed() - best_lane.speed_limit))
    if not violations:
        return 1.0
    mean_v = float(np.mean(violations))
    return max(0.0, 1.0 - mean_v / cfg.speed_tolerance)


def _comfort_ok(frames: list[Frame], cfg: ComfortThresholds) -> bool:
    egos = _ego_series(frames)
    if len(egos) < 4:
        return True
    dt = FRAME_DT
    th = np.array([a.theta for a in egos])
    vx = np.array([a.v_x for a in egos])
    vy = np.array([a.v_y for a in egos])
    ax = np.diff(vx) / dt
    ay = np.diff(vy) / dt
    heading_mid = th[:-1]
    lon_a = ax * np.cos(heading_mid) + ay * np.sin(heading_mid)
    lat_a = -ax * np.sin(heading_mid) + ay * np.cos(heading_mid)
    yaw_rate = np.array([float(wrap_angle(b - a)) for a, b in zip(th, th[1:])]) / dt
    yaw_accel = np.diff(yaw_rate) / dt
    jx, jy = np.diff(ax) / dt, np.diff(ay) / dt
    jerk_mag = np.hypot(jx, jy)
    lon_jerk = np.diff(lon_a) / dt
    return bool(
        (np.abs(lat_a) <= cfg.lat_accel).all()
        and (lon_a <= cfg.lon_accel_max).all()
        and (lon_a >= cfg.lon_accel_min).all()
        and (np.abs(yaw_rate) <= cfg.yaw_rate).all()
        and (np.abs(yaw_accel) <= cfg.yaw_accel).all()
        and (np.abs(lon_jerk) <= cfg.lon_jerk).all()
        and (jerk_mag <= cfg.jerk).all()
    )


def _drivable_violation(frames: list[Frame], map_model: MapModel) -> float:
    """Worst encroachment (m) of any ego box corner outside the drivable area."""
    if not map_model.drivable_region:
        return 0.0
    worst = 0.0
    for fr in frames:
        ego = fr.agent_by_id(0)
        if ego is None or not ego.valid:
            continue
        for corner in obb_corners(ego.x, ego.y, ego.theta, ego.w, ego.l):
            d = signed_distance_to_region(corner, map_model.drivable_region)
            if d < 0:
                worst = max(worst, -d)
    return worst


def _min_ttc(frames: list[Frame]) -> float:
    best = math.inf
    for fr in frames:
        ego = fr.agent_by_id(0)
        if ego is None or not ego.valid:
            continue
        others = [o for o in fr.valid_agents() if o.agent_id != 0]
        if others:
            best = min(best, _ttc(ego, others))
    return best


def nuplan_score(rollout: list[Frame], map_model: MapModel, cfg: RewardConfig,
                 expert: list[Frame] | None = None,
                 config_hash: str = "") -> ScoreReport:
    """Gated + weighted driving score for one rollout (frames include ego id 0).

    Progress is the ratio of ego route progress to the expert's over the same
    span (1.0 when no expert is supplied and the ego progresses at all).
    """
    if not map_model.route:
        raise ValueError("map has no route")
    collisions = _collisions(rollout)
    at_fault = [(t, o) for t, o, e in collisions if _at_fault(e, o)]
    vru_or_vehicle = any(o.agent_class in VRU_CLASSES or o.agent_class == "vehicle"
                        for _, o in at_fault)
    violation_m = _drivable_violation(rollout, map_model)
    dir_score, against_m = _direction_compliance(rollout, map_model, cfg)
    progress_m = _route_progress(rollout, map_model)
    if expert is not None:
        expert_m = max(_route_progress(expert, map_model), 1e-6)
        progress_ratio = max(0.0, min(1.0, progress_m / expert_m))
    else:
        progress_ratio = 1.0 if progress_m > 0 else 0.0

    gates = {
        "no_at_fault_collision": not vru_or_vehicle,
        "single_at_fault_at_most": len(at_fault) < 2,
        "drivable_area": violation_m <= cfg.max_violation_m,
        "oncoming": against_m <= cfg.oncoming_gate_m,
        "making_progress": progress_ratio >= cfg.min_progress_ratio,
    }
    theta = 1.0 if all(gates.values()) else 0.0

    phi = {
        "driving_direction": dir_score,
        "ttc": 1.0 if _min_ttc(rollout) >= cfg.ttc_bound_s else 0.0,
        "speed_limit": _speed_limit_score(rollout, map_model, cfg),
        "progress": progress_ratio,
        "comfort": 1.0 if _comfort_ok(rollout, cfg.comfort) else 0.0,
    }
    w = cfg.weights
    weighted = sum(w[k] * phi[k] for k in phi) / sum(w.values())
    score = theta * weighted
    metrics = dict(phi)
    metrics.update({f"gate_{k}": float(v) for k, v in gates.items()})
    metrics["progress_m"] = progress_m
    return ScoreReport(metrics=metrics, composite=score,
                       breakdown={"theta": theta, "weighted": weighted,
                                  "collisions": len(collisions),
                                  "at_fault": len(at_fault)},
                       config_hash=config_hash)


def rl_score(rollout: list[Frame], map_model: MapModel, cfg: RewardConfig,
             config_hash: str = "") -> ScoreReport:
    """Strict episode score: any collision or any drivable encroachment zeroes
    it; otherwise the mean of normalized progress and the comfort indicator."""
    collided = bool(_collisions(rollout))
    off_road = _drivable_violation(rollout, map_model) > 0.0
    theta = 0.0 if (collided or off_road) else 1.0
    progress_m = _route_progress(rollout, map_model)
    progress = max(0.0, min(1.0, progress_m / cfg.rl_progress_norm_m))
    comfort = 1.0 if _comfort_ok(rollout, cfg.comfort) else 0.0
    phi = (progress + comfort) / 2.0
    metrics = {"collision": float(collided), "off_drivable": float(off_road),
               "progress_m": progress_m, "progress": progress, "comfort": comfort}
    return ScoreReport(metrics=metrics, composite=theta * phi,
                       breakdown={"theta": theta, "phi": phi},
                       config_hash=config_hash)


def estimate_value(scores, gamma_disc: float = 1.0) -> float:
    """Monte-Carlo value: mean episode score over the parallel rollouts."""
    scores = list(scores)
    if not scores:
        raise ValueError("need at least one rollout score")
    return float(np.mean(scores))


def argmax_policy(values) -> int:
    """Index of the best value; ties resolve to the lowest index."""
    values = list(values)
    best = max(values)
    return values.index(best)
