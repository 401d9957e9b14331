"""Temporal aggregation of overlapping chunk predictions.

A chunk emitted at frame e covers frames e+1..e+H. Aggregation at frame t
combines the buffered predictions with normalized weights gamma^i over
offsets i = t - e - 1 (newest chunk has offset 0); headings use the
circular mean under the same weights. gamma = 0 selects the newest
prediction exactly (0^0 := 1).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import circular_mean

DEFAULT_GAMMA = 1.2


@dataclass
class ChunkAggregator:
    horizon: int
    gamma: float = DEFAULT_GAMMA
    buffer: list[tuple[int, np.ndarray]] = field(default_factory=list)  # (emitted_at, (H,3))

    def push(self, emitted_at: int, poses: np.ndarray) -> None:
        poses = np.asarray(poses, dtype=float)
        if poses.shape != (self.horizon, 3):
            raise ValueError(f"chunk poses must be ({self.horizon}, 3)")
        self.buffer.append((int(emitted_at), poses))
        if len(self.buffer) > self.horizon:
            self.buffer = self.buffer[-self.horizon:]

    def entries_for(self, t: int) -> list[tuple[int, np.ndarray]]:
        """(offset, pose) for every buffered chunk covering frame t."""
        out = []
        for emitted_at, poses in self.buffer:
            i = t - emitted_at - 1
            if 0 <= i < self.horizon:
                out.append((i, poses[i]))
        return out

    def weights_for(self, t: int) -> np.ndarray:
        """Normalized aggregation weights (sum to 1) for frame t."""
        entries = self.entries_for(t)
        if not entries:
            raise RuntimeError(f"no buffered prediction covers frame {t}")
        offsets = np.array([i for i, _ in entries], dtype=float)
        if self.gamma == 0.0:
            w = (offsets == offsets.min()).astype(float)
        else:
            w = self.gamma ** offsets
        return w / w.sum()

    def aggregate(self, t: int) -> tuple[float, float, float]:
        """Weighted pose (x, y, theta) at frame t over the buffered chunks."""
        entries = self.entries_for(t)
        w = self.weights_for(t)
        xs = np.array([p[0] for _, p in entries])
        ys = np.array([p[1] for _, p in entries])
        ths = np.array([p[2] for _, p in entries])
        return (float(w @ xs), float(w @ ys), circular_mean(ths, w))


def aggregate_chunks(agg: ChunkAggregator, t: int) -> tuple[float, float, float]:
    return agg.aggregate(t)
