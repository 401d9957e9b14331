"""Intelligent Driver Model longitudinal acceleration."""
from __future__ import annotations

import math

from .types import IdmParams

DEFAULT_MAX_BRAKE = 8.0


def idm_accel(v: float, v0: float, gap: float, approach_rate: float,
              p: IdmParams, max_brake: float = DEFAULT_MAX_BRAKE) -> float:
    """IDM acceleration a*[1 - (v/v0)^delta - (s*/s)^2].

    s* = s0 + v*T + v*dv / (2*sqrt(a*b)). `gap` may be math.inf for a free
    road; `approach_rate` is the closing speed (own speed minus leader speed).
    The result is clipped to [-max_brake, p.a].
    """
    p.validate()
    if v0 <= 0:
        raise ValueError("v0 must be positive")
    if not gap > 0:
        raise ValueError("gap must be positive (use math.inf for free road)")
    free = 1.0 - (v / v0) ** p.delta
    if math.isinf(gap):
        interaction = 0.0
    else:
        s_star = p.s0 + max(0.0, v * p.T + v * approach_rate / (2.0 * math.sqrt(p.a * p.b)))
        interaction = (s_star / gap) ** 2
    return float(min(p.a, max(-max_brake, p.a * (free - interaction))))
