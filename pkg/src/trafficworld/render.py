"""Deterministic SVG rendering of frames: map layers, agent boxes with
heading ticks, the ego route, and light states."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .geometry import obb_corners
from .synthworld.types import Frame, MapModel

LIGHT_COLORS = {"green": "#2e8b57", "yellow": "#e0a800", "red": "#c0392b",
                "unknown": "#888888"}
CLASS_COLORS = {"vehicle": "#1f77b4", "pedestrian": "#d62728",
                "cyclist": "#9467bd"}


def _f(x: float) -> str:
    return f"{x:.3f}"


def _pts(points) -> str:
    return " ".join(f"{_f(p[0])},{_f(p[1])}" for p in points)


def render_frame_svg(map_model: MapModel, frame: Frame, scale: float = 4.0) -> str:
    xmin, ymin, xmax, ymax = map_model.extent
    w, h = (xmax - xmin) * scale, (ymax - ymin) * scale
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w)}" height="{_f(h)}" '
        f'viewBox="{_f(xmin)} {_f(-ymax)} {_f(xmax - xmin)} {_f(ymax - ymin)}">',
        '<g transform="scale(1,-1)">',
        f'<rect x="{_f(xmin)}" y="{_f(ymin)}" width="{_f(xmax - xmin)}" '
        f'height="{_f(ymax - ymin)}" fill="#f8f8f5"/>',
    ]
    for poly in map_model.drivable_region:
        parts.append(f'<polygon points="{_pts(poly)}" fill="#e2e2e2" stroke="none"/>')
    for poly in map_model.crosswalks:
        parts.append(f'<polygon points="{_pts(poly)}" fill="#ffffff" '
                     f'stroke="#bbbbbb" stroke-width="0.2"/>')
    route_ids = set(map_model.route)
    for lane in map_model.lanes:
        color = "#7fb069" if lane.lane_id in route_ids else "#b0b0b0"
        width = 0.9 if lane.lane_id in route_ids else 0.4
        parts.append(f'<polyline points="{_pts(lane.centerline)}" fill="none" '
                     f'stroke="{color}" stroke-width="{_f(width)}"/>')
    for lt in frame.lights:
        if lt.anchor >= len(map_model.traffic_light_anchors):
            continue
        ax, ay, _ = map_model.traffic_light_anchors[lt.anchor]
        parts.append(f'<circle cx="{_f(ax)}" cy="{_f(ay)}" r="1.6" '
                     f'fill="{LIGHT_COLORS[lt.state]}"/>')
    for a in frame.valid_agents():
        color = CLASS_COLORS.get(a.agent_class, "#333333")
        corners = obb_corners(a.x, a.y, a.theta, a.w, a.l)
        stroke = "#111111" if a.agent_id == 0 else "none"
        parts.append(f'<polygon points="{_pts(corners)}" fill="{color}" '
                     f'fill-opacity="0.85" stroke="{stroke}" stroke-width="0.25"/>')
        tip_x = a.x + 0.6 * a.l * math.cos(a.theta)
        tip_y = a.y + 0.6 * a.l * math.sin(a.theta)
        parts.append(f'<line x1="{_f(a.x)}" y1="{_f(a.y)}" x2="{_f(tip_x)}" '
                     f'y2="{_f(tip_y)}" stroke="#111111" stroke-width="0.2"/>')
    parts.append("</g>")
    parts.append(f'<text x="4" y="14" font-size="12" font-family="monospace">'
                 f't={frame.time:.1f}s agents={len(frame.valid_agents())}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_log(map_model: MapModel, frames: list[Frame], out_dir,
               scale: float = 4.0) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, fr in enumerate(frames):
        p = out / f"frame_{i:04d}.svg"
        p.write_text(render_frame_svg(map_model, fr, scale=scale))
        paths.append(p)
    return paths
