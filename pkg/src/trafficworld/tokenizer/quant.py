"""Per-attribute uniform quantization on the configured meshgrid.

Default ranges/steps (paper-scale): x, y in (-100, 100) m at 0.2 m;
theta in (-pi, pi) at pi/100; w in (0, 7) m and l in (0, 15) m at 0.5 m;
v_x, v_y in (0, 25) m/s at 0.25 m/s. Velocities are the agent-frame
longitudinal/lateral components; `signed_velocity=True` switches their
range to (-25, 25) at 0.5 m/s, keeping 100 bins so the vocabulary layout
is unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

ATTR_ORDER = ("x", "y", "theta", "w", "l", "v_x", "v_y")


@dataclass(frozen=True)
class AttrSpec:
    name: str
    lo: float
    hi: float
    step: float

    @property
    def count(self) -> int:
        return int(math.ceil((self.hi - self.lo) / self.step - 1e-9))


@dataclass(frozen=True)
class QuantSpec:
    attrs: tuple[AttrSpec, ...]

    def __post_init__(self):
        names = [a.name for a in self.attrs]
        if list(names) != list(ATTR_ORDER):
            raise ValueError(f"attributes must be {ATTR_ORDER}, got {names}")
        for a in self.attrs:
            if not a.hi > a.lo or not a.step > 0:
                raise ValueError(f"bad range for {a.name}")

    @staticmethod
    def default(signed_velocity: bool = False) -> "QuantSpec":
        v_lo, v_hi, v_step = (-25.0, 25.0, 0.5) if signed_velocity else (0.0, 25.0, 0.25)
        return QuantSpec(attrs=(
            AttrSpec("x", -100.0, 100.0, 0.2),
            AttrSpec("y", -100.0, 100.0, 0.2),
            AttrSpec("theta", -math.pi, math.pi, math.pi / 100.0),
            AttrSpec("w", 0.0, 7.0, 0.5),
            AttrSpec("l", 0.0, 15.0, 0.5),
            AttrSpec("v_x", v_lo, v_hi, v_step),
            AttrSpec("v_y", v_lo, v_hi, v_step),
        ))

    @staticmethod
    def tiny() -> "QuantSpec":
        """Coarse grid for micro models (gradient checks, unit tests)."""
        return QuantSpec(attrs=(
            AttrSpec("x", -100.0, 100.0, 100.0 / 6),
            AttrSpec("y", -100.0, 100.0, 100.0 / 6),
            AttrSpec("theta", -math.pi, math.pi, math.pi / 2),
            AttrSpec("w", 0.0, 7.0, 3.5),
            AttrSpec("l", 0.0, 15.0, 7.5),
            AttrSpec("v_x", 0.0, 25.0, 25.0 / 4),
            AttrSpec("v_y", 0.0, 25.0, 25.0 / 4),
        ))

    def attr(self, name: str) -> AttrSpec:
        for a in self.attrs:
            if a.name == name:
                return a
        raise KeyError(name)

    def counts(self) -> dict[str, int]:
        return {a.name: a.count for a in self.attrs}

    def quantize(self, name: str, value: float) -> int:
        """Bin index of a value: floor((clamp(v) - lo) / step), exact edges round up."""
        a = self.attr(name)
        if math.isnan(value):
            raise ValueError(f"{name}: NaN value")
        v = min(max(float(value), a.lo), a.hi - 1e-12 * max(1.0, abs(a.hi)))
        idx = int(math.floor((v - a.lo) / a.step + 1e-9))
        return min(max(idx, 0), a.count - 1)

    def dequantize(self, name: str, index: int) -> float:
        """Bin center lo + (index + 0.5) * step."""
        a = self.attr(name)
        if not 0 <= index < a.count:
            raise ValueError(f"{name}: bin {index} out of [0, {a.count})")
        return a.lo + (index + 0.5) * a.step

    def normalize(self, name: str, value: float) -> float:
        """Value mapped to [0, 1] over the attribute range (clamped)."""
        a = self.attr(name)
        return min(1.0, max(0.0, (float(value) - a.lo) / (a.hi - a.lo)))

    def quantize_array(self, name: str, values) -> "np.ndarray":
        """Vectorized quantize; same rule as the scalar path."""
        import numpy as np
        a = self.attr(name)
        v = np.asarray(values, dtype=float)
        if np.isnan(v).any():
            raise ValueError(f"{name}: NaN value")
        v = np.clip(v, a.lo, a.hi - 1e-12 * max(1.0, abs(a.hi)))
        idx = np.floor((v - a.lo) / a.step + 1e-9).astype(np.int64)
        return np.clip(idx, 0, a.count - 1)

    def dequantize_array(self, name: str, indices) -> "np.ndarray":
        import numpy as np
        a = self.attr(name)
        idx = np.asarray(indices)
        if (idx < 0).any() or (idx >= a.count).any():
            raise ValueError(f"{name}: bin index out of range")
        return a.lo + (idx + 0.5) * a.step


def quantize_attr(spec: QuantSpec, name: str, value: float) -> int:
    return spec.quantize(name, value)


def dequantize_attr(spec: QuantSpec, name: str, index: int) -> float:
    return spec.dequantize(name, index)
