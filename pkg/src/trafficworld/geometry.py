"""Planar geometry shared by the synthetic world, metrics and engines.

All angles are radians wrapped to [-pi, pi), all lengths meters. Boxes are
oriented rectangles given as (cx, cy, heading, width, length) with length
along the heading axis.
"""
from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to [-pi, pi)."""
    return (np.asarray(theta) + math.pi) % TWO_PI - math.pi


def angle_diff(a, b):
    """Signed minimal difference a - b, wrapped to [-pi, pi)."""
    return wrap_angle(np.asarray(a) - np.asarray(b))


def circular_mean(angles, weights=None) -> float:
    """Weighted circular mean of angles; weights need not be normalized."""
    angles = np.asarray(angles, dtype=float)
    if weights is None:
        weights = np.ones_like(angles)
    weights = np.asarray(weights, dtype=float)
    s = float(np.sum(weights * np.sin(angles)))
    c = float(np.sum(weights * np.cos(angles)))
    return float(wrap_angle(math.atan2(s, c)))


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def obb_corners(cx: float, cy: float, theta: float, w: float, l: float) -> np.ndarray:
    """Corners (4,2) of an oriented box, counterclockwise, length along heading."""
    hx, hy = 0.5 * l, 0.5 * w
    local = np.array([[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]])
    return local @ rotation(theta).T + np.array([cx, cy])


def _project_extent(corners: np.ndarray, axis: np.ndarray) -> tuple[float, float]:
    p = corners @ axis
    return float(p.min()), float(p.max())


def obb_overlap(box_a, box_b) -> bool:
    """Separating-axis test for two (cx, cy, theta, w, l) boxes."""
    ca = obb_corners(*box_a)
    cb = obb_corners(*box_b)
    for theta in (box_a[2], box_b[2]):
        for axis in (np.array([math.cos(theta), math.sin(theta)]),
                     np.array([-math.sin(theta), math.cos(theta)])):
            amin, amax = _project_extent(ca, axis)
            bmin, bmax = _project_extent(cb, axis)
            if amax < bmin or bmax < amin:
                return False
    return True


def _segment_distance(p1, p2, q1, q2) -> float:
    """Min distance between segments p1-p2 and q1-q2."""
    def seg_point(a, b, p):
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
        return float(np.linalg.norm(a + t * ab - p))

    def ccw(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    # proper intersection -> distance zero
    d1, d2 = ccw(q1, q2, p1), ccw(q1, q2, p2)
    d3, d4 = ccw(p1, p2, q1), ccw(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return 0.0
    return min(seg_point(p1, p2, q1), seg_point(p1, p2, q2),
               seg_point(q1, q2, p1), seg_point(q1, q2, p2))


def _penetration_depth(ca: np.ndarray, cb: np.ndarray, thetas) -> float:
    depth = math.inf
    for theta in thetas:
        for axis in (np.array([math.cos(theta), math.sin(theta)]),
                     np.array([-math.sin(theta), math.cos(theta)])):
            amin, amax = _project_extent(ca, axis)
            bmin, bmax = _project_extent(cb, axis)
            overlap = min(amax, bmax) - max(amin, bmin)
            depth = min(depth, overlap)
    return depth


def obb_signed_distance(box_a, box_b) -> float:
    """Signed distance between boxes: gap if disjoint, minus penetration depth if overlapping."""
    ca = obb_corners(*box_a)
    cb = obb_corners(*box_b)
    if obb_overlap(box_a, box_b):
        return -_penetration_depth(ca, cb, (box_a[2], box_b[2]))
    best = math.inf
    for i in range(4):
        p1, p2 = ca[i], ca[(i + 1) % 4]
        for j in range(4):
            best = min(best, _segment_distance(p1, p2, cb[j], cb[(j + 1) % 4]))
    return best


def polyline_length(points: np.ndarray) -> float:
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))


def polyline_arclengths(points: np.ndarray) -> np.ndarray:
    """Cumulative arclength per vertex, starting at 0."""
    points = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def point_on_polyline(points: np.ndarray, s: float) -> tuple[float, float, float]:
    """Point and tangent heading at arclength s (clamped to the polyline)."""
    points = np.asarray(points, dtype=float)
    cum = polyline_arclengths(points)
    s = float(np.clip(s, 0.0, cum[-1]))
    i = int(np.searchsorted(cum, s, side="right") - 1)
    i = min(i, len(points) - 2)
    seg_len = cum[i + 1] - cum[i]
    t = 0.0 if seg_len == 0.0 else (s - cum[i]) / seg_len
    p = points[i] + t * (points[i + 1] - points[i])
    d = points[i + 1] - points[i]
    return float(p[0]), float(p[1]), float(math.atan2(d[1], d[0]))


def project_to_polyline(points: np.ndarray, xy) -> tuple[float, float, float]:
    """Project a point onto a polyline.

    Returns (arclength of foot point, signed lateral offset with left positive,
    tangent heading at the foot point).
    """
    points = np.asarray(points, dtype=float)
    xy = np.asarray(xy, dtype=float)
    cum = polyline_arclengths(points)
    best = (math.inf, 0.0, 0.0, 0.0)
    for i in range(len(points) - 1):
        a, b = points[i], points[i + 1]
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            continue
        t = float(np.clip((xy - a) @ ab / denom, 0.0, 1.0))
        foot = a + t * ab
        d = float(np.linalg.norm(xy - foot))
        if d < best[0]:
            heading = math.atan2(ab[1], ab[0])
            side = math.copysign(1.0, ab[0] * (xy[1] - a[1]) - ab[1] * (xy[0] - a[0]))
            best = (d, cum[i] + t * math.sqrt(denom), side, heading)
    return best[1], best[0] * best[2], best[3]


def point_in_polygon(xy, polygon: np.ndarray) -> bool:
    """Even-odd rule point-in-polygon test."""
    x, y = float(xy[0]), float(xy[1])
    poly = np.asarray(polygon, dtype=float)
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xin = (x2 - x1) * (y - y1) / (y2 - y1) + x1
            if x < xin:
                inside = not inside
    return inside


def distance_to_polygon_boundary(xy, polygon: np.ndarray) -> float:
    poly = np.asarray(polygon, dtype=float)
    xy = np.asarray(xy, dtype=float)
    best = math.inf
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom == 0.0 else float(np.clip((xy - a) @ ab / denom, 0.0, 1.0))
        best = min(best, float(np.linalg.norm(a + t * ab - xy)))
    return best


def signed_distance_to_region(xy, polygons) -> float:
    """Signed distance to a union of polygons: positive inside, negative outside.

    Distance is to the nearest polygon boundary; for overlapping unions this is a
    conservative approximation near interior seams.
    """
    inside = any(point_in_polygon(xy, p) for p in polygons)
    d = min(distance_to_polygon_boundary(xy, p) for p in polygons)
    return d if inside else -d
