"""Static-context rasterization.

Seven channels in fixed order: roadmap, baseline paths, route, drivable area,
speed limit, static agents, traffic light. The grid is drawn in the frame of
the center pose (rotated so the pose heading points +x), covering
`extent_m` x `extent_m` meters, values in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import Frame, MapModel

CHANNELS = ("roadmap", "baseline_paths", "route", "drivable_area",
            "speed_limit", "static_agents", "traffic_light")

LIGHT_INTENSITY = {"red": 1.0, "yellow": 0.75, "green": 0.5, "unknown": 0.25}
STATIC_SPEED = 0.05


@dataclass
class RasterConfig:
    grid: int = 128            # cells per side
    extent_m: float = 200.0    # meters covered per side
    max_speed: float = 30.0    # speed-limit channel normalizer

    @property
    def meters_per_cell(self) -> float:
        return self.extent_m / self.grid


def _world_to_grid_frame(points: np.ndarray, center_pose) -> np.ndarray:
    """Rotate/translate world points into the center-pose frame."""
    cx, cy, cth = center_pose
    c, s = math.cos(-cth), math.sin(-cth)
    p = np.asarray(points, dtype=float) - np.array([cx, cy])
    return p @ np.array([[c, -s], [s, c]]).T


def _axes(cfg: RasterConfig) -> np.ndarray:
    half = cfg.extent_m / 2.0
    step = cfg.meters_per_cell
    return -half + step * (np.arange(cfg.grid) + 0.5)


def _polyline_dist2(pts: np.ndarray, ax: np.ndarray, reach: float):
    """Min squared distance to the polyline on a local subgrid.

    Returns (row slice, col slice, d2 array) or None if off-grid. Rows index
    y, columns x.
    """
    if len(pts) < 2:
        return None
    step = ax[1] - ax[0] if len(ax) > 1 else 1.0
    g = len(ax)
    lo = ax[0]
    out = None
    run = 6
    for s0 in range(0, len(pts) - 1, run):
        seg = pts[s0: s0 + run + 1]
        bb_lo = seg.min(axis=0) - reach - step
        bb_hi = seg.max(axis=0) + reach + step
        i0 = np.clip(np.floor((bb_lo - lo) / step).astype(int), 0, g - 1)
        i1 = np.clip(np.ceil((bb_hi - lo) / step).astype(int) + 1, 0, g)
        if i1[0] <= i0[0] or i1[1] <= i0[1]:
            continue
        X, Y = np.meshgrid(ax[i0[0]:i1[0]], ax[i0[1]:i1[1]], indexing="xy")
        sub = np.stack([X, Y], axis=-1)
        a = seg[:-1]
        ab = seg[1:] - a
        denom = np.maximum((ab * ab).sum(axis=1), 1e-12)
        rel = sub[:, :, None, :] - a[None, None]
        t = np.clip((rel * ab[None, None]).sum(-1) / denom, 0.0, 1.0)
        foot = a[None, None] + t[..., None] * ab[None, None]
        d2 = ((sub[:, :, None, :] - foot) ** 2).sum(-1).min(axis=-1)
        if out is None:
            out = np.full((g, g), np.inf)
        block = out[i0[1]:i1[1], i0[0]:i1[0]]
        np.minimum(block, d2, out=block)
    if out is None:
        return None
    return out


def _fill_polygon(grid: np.ndarray, poly: np.ndarray, ax: np.ndarray,
                  value: float = 1.0) -> None:
    """Fill cells whose centers are inside the polygon (even-odd), bbox-local."""
    poly = np.asarray(poly, dtype=float)
    step = ax[1] - ax[0] if len(ax) > 1 else 1.0
    g = len(ax)
    lo = ax[0]
    i0 = np.clip(np.floor((poly.min(axis=0) - lo) / step).astype(int), 0, g - 1)
    i1 = np.clip(np.ceil((poly.max(axis=0) - lo) / step).astype(int) + 1, 0, g)
    if i1[0] <= i0[0] or i1[1] <= i0[1]:
        return
    X, Y = np.meshgrid(ax[i0[0]:i1[0]], ax[i0[1]:i1[1]], indexing="xy")
    inside = np.zeros(X.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > Y) != (y2 > Y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xin = (x2 - x1) * (Y - y1) / (y2 - y1) + x1
        inside ^= crosses & (X < xin)
    region = grid[i0[1]:i1[1], i0[0]:i1[0]]
    region[inside] = np.maximum(region[inside], value)


def rasterize(map_model: MapModel, frame: Frame, center_pose,
              cfg: RasterConfig | None = None) -> np.ndarray:
    """Render the 7-channel context raster centered on (x, y, theta)."""
    cfg = cfg or RasterConfig()
    cx, cy, cth = (float(v) for v in center_pose)
    if not all(math.isfinite(v) for v in (cx, cy, cth)):
        raise ValueError("center pose must be finite")
    out = np.zeros((len(CHANNELS), cfg.grid, cfg.grid), dtype=np.float32)
    ax = _axes(cfg)
    pose = (cx, cy, cth)
    cell = cfg.meters_per_cell

    route_ids = set(map_model.route)
    for lane in map_model.lanes:
        pts = _world_to_grid_frame(lane.centerline, pose)
        d2 = _polyline_dist2(pts, ax, reach=lane.width / 2.0)
        if d2 is None:
            continue
        lane_mask = d2 <= (lane.width / 2.0) ** 2
        base_mask = d2 <= (0.6 * cell) ** 2
        np.maximum(out[0], lane_mask, out=out[0])
        np.maximum(out[1], base_mask, out=out[1])
        if lane.lane_id in route_ids:
            np.maximum(out[2], lane_mask, out=out[2])
        np.maximum(out[4], lane_mask * min(1.0, lane.speed_limit / cfg.max_speed),
                   out=out[4])
    for poly in map_model.drivable_region:
        _fill_polygon(out[3], _world_to_grid_frame(poly, pose), ax)
    for agent in frame.agents:
        if agent.valid and agent.speed() < STATIC_SPEED:
            from ..geometry import obb_corners
            corners = obb_corners(agent.x, agent.y, agent.theta, agent.w, agent.l)
            _fill_polygon(out[5], _world_to_grid_frame(corners, pose), ax)
    for light in frame.lights:
        if light.anchor >= len(map_model.traffic_light_anchors):
            continue
        a = map_model.traffic_light_anchors[light.anchor]
        p = _world_to_grid_frame(np.array([a[:2]]), pose)[0]
        d2 = _polyline_dist2(np.array([p, p + 1e-6]), ax, reach=1.2 * cell)
        if d2 is not None:
            mask = d2 <= (1.2 * cell) ** 2
            np.maximum(out[6], mask * LIGHT_INTENSITY[light.state], out=out[6])
    return out
